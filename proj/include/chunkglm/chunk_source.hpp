#ifndef CHUNKGLM_CHUNK_SOURCE_HPP
#define CHUNKGLM_CHUNK_SOURCE_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace chunkglm {

inline constexpr Eigen::Index kDefaultChunkSize = 10000;

/// Which columns of a table form the response, the prior weights m and the
/// model matrix. With `intercept` a leading column of ones is added.
struct ChunkSchema {
  std::string response;
  std::optional<std::string> weights;
  std::vector<std::string> covariates;
  bool intercept = true;

  Eigen::Index p() const noexcept {
    return static_cast<Eigen::Index>(covariates.size()) + (intercept ? 1 : 0);
  }
  // Names of the model-matrix columns, "(Intercept)" first when present.
  std::vector<std::string> coefficient_names() const;
  void validate() const;
};

struct Chunk {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd m;
  std::int64_t row_offset = 0;

  Eigen::Index rows() const noexcept { return x.rows(); }
};

/// Re-iterable provider of row blocks. Every block but the last has exactly
/// chunk_size() rows; blocks arrive in a stable order on every pass.
class ChunkSource {
 public:
  explicit ChunkSource(Eigen::Index chunk_size);
  virtual ~ChunkSource() = default;

  ChunkSource(const ChunkSource&) = delete;
  ChunkSource& operator=(const ChunkSource&) = delete;

  /// Next block of the current pass, or nullopt once the pass is exhausted
  /// (and on every call after that until reset()).
  virtual std::optional<Chunk> next_chunk() = 0;
  /// Restarts the pass at the first block.
  virtual void reset() = 0;
  virtual bool rewindable() const { return true; }
  virtual Eigen::Index cols() const = 0;
  /// Total row count when known, which for streamed sources is after one
  /// complete pass.
  virtual std::optional<std::int64_t> known_rows() const = 0;

  Eigen::Index chunk_size() const noexcept { return chunk_size_; }
  // Largest number of data rows held at once since construction.
  Eigen::Index peak_buffered_rows() const noexcept { return peak_rows_; }

 protected:
  void note_buffered(Eigen::Index rows) {
    if (rows > peak_rows_) peak_rows_ = rows;
  }

 private:
  Eigen::Index chunk_size_;
  Eigen::Index peak_rows_ = 0;
};

/// Column-named numeric table held in memory.
struct Table {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;  // rows x columns
};

class MemoryChunkSource final : public ChunkSource {
 public:
  MemoryChunkSource(const Table& table, const ChunkSchema& schema,
                    Eigen::Index chunk_size = kDefaultChunkSize);
  /// Directly from a model matrix (taken as is, no intercept added).
  MemoryChunkSource(Eigen::MatrixXd x, Eigen::VectorXd y, Eigen::VectorXd m,
                    Eigen::Index chunk_size = kDefaultChunkSize);

  std::optional<Chunk> next_chunk() override;
  void reset() override { next_row_ = 0; }
  Eigen::Index cols() const override { return x_.cols(); }
  std::optional<std::int64_t> known_rows() const override { return x_.rows(); }

 private:
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
  Eigen::VectorXd m_;
  Eigen::Index next_row_ = 0;
};

/// Streams a comma-separated file with a header row. Only the rows of the
/// current block are held in memory.
class CsvChunkSource final : public ChunkSource {
 public:
  CsvChunkSource(const std::filesystem::path& path, const ChunkSchema& schema,
                 Eigen::Index chunk_size = kDefaultChunkSize);
  /// Reads from a borrowed stream; such a source cannot be reset.
  CsvChunkSource(std::istream& stream, const ChunkSchema& schema,
                 Eigen::Index chunk_size = kDefaultChunkSize);

  std::optional<Chunk> next_chunk() override;
  void reset() override;
  bool rewindable() const override { return file_ != nullptr; }
  Eigen::Index cols() const override { return schema_.p(); }
  std::optional<std::int64_t> known_rows() const override { return total_rows_; }

 private:
  void read_header();

  ChunkSchema schema_;
  std::unique_ptr<std::ifstream> file_;
  std::istream* in_ = nullptr;
  std::streampos data_start_{};
  std::vector<std::string> header_;
  // Position in header_ of each model-matrix column; -1 for the intercept.
  std::vector<int> x_columns_;
  int y_column_ = -1;
  int m_column_ = -1;
  std::int64_t next_row_ = 0;
  std::int64_t line_number_ = 1;
  bool exhausted_ = false;
  std::optional<std::int64_t> total_rows_;
  std::vector<std::string_view> fields_;
  std::string line_;
};

/// Reads an entire CSV file into a Table (every column numeric).
Table read_csv_table(const std::filesystem::path& path);

}  // namespace chunkglm

#endif  // CHUNKGLM_CHUNK_SOURCE_HPP
