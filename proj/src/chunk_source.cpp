#include "chunkglm/chunk_source.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <set>
#include <string_view>

#include "chunkglm/errors.hpp"

namespace chunkglm {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

void split_fields(std::string_view line, std::vector<std::string_view>& out) {
  out.clear();
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

std::string unquote(std::string_view s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return std::string(s);
}

double parse_number(std::string_view cell, std::int64_t row, const std::string& column) {
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty()) {
    throw ParseError(static_cast<std::size_t>(row), column,
                     "'" + std::string(cell) + "' is not a number");
  }
  return value;
}

int find_column(const std::vector<std::string>& names, const std::string& wanted) {
  const auto it = std::find(names.begin(), names.end(), wanted);
  if (it == names.end()) throw SchemaError("column '" + wanted + "' not found");
  return static_cast<int>(it - names.begin());
}

}  // namespace

std::vector<std::string> ChunkSchema::coefficient_names() const {
  std::vector<std::string> names;
  if (intercept) names.emplace_back("(Intercept)");
  names.insert(names.end(), covariates.begin(), covariates.end());
  return names;
}

void ChunkSchema::validate() const {
  if (response.empty()) throw SchemaError("no response column given");
  std::set<std::string> seen{response};
  if (weights && !seen.insert(*weights).second) {
    throw SchemaError("column '" + *weights + "' used twice");
  }
  for (const auto& c : covariates) {
    if (!seen.insert(c).second) throw SchemaError("column '" + c + "' used twice");
  }
  if (p() == 0) throw SchemaError("model has no columns");
}

ChunkSource::ChunkSource(Eigen::Index chunk_size) : chunk_size_(chunk_size) {
  if (chunk_size < 1) throw ConfigError("chunk size must be at least 1");
}

MemoryChunkSource::MemoryChunkSource(const Table& table, const ChunkSchema& schema,
                                     Eigen::Index chunk_size)
    : ChunkSource(chunk_size) {
  schema.validate();
  if (static_cast<Eigen::Index>(table.columns.size()) != table.values.cols()) {
    throw ShapeError("table header and value matrix disagree");
  }
  const Eigen::Index n = table.values.rows();
  const Eigen::Index p = schema.p();
  x_.resize(n, p);
  Eigen::Index j = 0;
  if (schema.intercept) x_.col(j++).setOnes();
  for (const auto& name : schema.covariates) {
    x_.col(j++) = table.values.col(find_column(table.columns, name));
  }
  y_ = table.values.col(find_column(table.columns, schema.response));
  if (schema.weights) {
    m_ = table.values.col(find_column(table.columns, *schema.weights));
  } else {
    m_ = Eigen::VectorXd::Ones(n);
  }
}

MemoryChunkSource::MemoryChunkSource(Eigen::MatrixXd x, Eigen::VectorXd y, Eigen::VectorXd m,
                                     Eigen::Index chunk_size)
    : ChunkSource(chunk_size), x_(std::move(x)), y_(std::move(y)), m_(std::move(m)) {
  if (y_.size() != x_.rows() || m_.size() != x_.rows()) {
    throw ShapeError("design, response and weights differ in length");
  }
}

std::optional<Chunk> MemoryChunkSource::next_chunk() {
  const Eigen::Index n = x_.rows();
  if (next_row_ >= n) return std::nullopt;
  const Eigen::Index rows = std::min(chunk_size(), n - next_row_);
  Chunk chunk{x_.middleRows(next_row_, rows), y_.segment(next_row_, rows),
              m_.segment(next_row_, rows), next_row_};
  next_row_ += rows;
  note_buffered(rows);
  return chunk;
}

CsvChunkSource::CsvChunkSource(const std::filesystem::path& path, const ChunkSchema& schema,
                               Eigen::Index chunk_size)
    : ChunkSource(chunk_size), schema_(schema) {
  schema_.validate();
  file_ = std::make_unique<std::ifstream>(path, std::ios::binary);
  if (!*file_) throw ReadError("cannot open '" + path.string() + "'");
  in_ = file_.get();
  read_header();
}

CsvChunkSource::CsvChunkSource(std::istream& stream, const ChunkSchema& schema,
                               Eigen::Index chunk_size)
    : ChunkSource(chunk_size), schema_(schema), in_(&stream) {
  schema_.validate();
  read_header();
}

void CsvChunkSource::read_header() {
  if (!std::getline(*in_, line_)) throw ReadError("missing header row");
  split_fields(line_, fields_);
  for (const auto f : fields_) header_.push_back(unquote(f));
  if (schema_.intercept) x_columns_.push_back(-1);
  for (const auto& name : schema_.covariates) x_columns_.push_back(find_column(header_, name));
  y_column_ = find_column(header_, schema_.response);
  if (schema_.weights) m_column_ = find_column(header_, *schema_.weights);
  if (file_) data_start_ = in_->tellg();
}

std::optional<Chunk> CsvChunkSource::next_chunk() {
  if (exhausted_) return std::nullopt;
  const Eigen::Index c = chunk_size();
  const auto p = static_cast<Eigen::Index>(x_columns_.size());
  Chunk chunk;
  chunk.row_offset = next_row_;
  chunk.x.resize(c, p);
  chunk.y.resize(c);
  chunk.m.resize(c);
  Eigen::Index filled = 0;
  while (filled < c) {
    if (!std::getline(*in_, line_)) {
      if (in_->bad()) throw ReadError("I/O failure after line " + std::to_string(line_number_));
      exhausted_ = true;
      total_rows_ = next_row_;
      break;
    }
    ++line_number_;
    if (trim(line_).empty()) continue;
    split_fields(line_, fields_);
    const std::int64_t data_row = next_row_ + 1;
    if (fields_.size() != header_.size()) {
      throw ParseError(static_cast<std::size_t>(data_row), "*",
                       "expected " + std::to_string(header_.size()) + " fields, found " +
                           std::to_string(fields_.size()));
    }
    for (Eigen::Index j = 0; j < p; ++j) {
      const int col = x_columns_[static_cast<std::size_t>(j)];
      chunk.x(filled, j) = col < 0 ? 1.0 : parse_number(fields_[col], data_row, header_[col]);
    }
    chunk.y(filled) = parse_number(fields_[y_column_], data_row, header_[y_column_]);
    chunk.m(filled) =
        m_column_ < 0 ? 1.0 : parse_number(fields_[m_column_], data_row, header_[m_column_]);
    ++filled;
    ++next_row_;
  }
  if (filled == 0) return std::nullopt;
  if (filled < c) {
    chunk.x.conservativeResize(filled, p);
    chunk.y.conservativeResize(filled);
    chunk.m.conservativeResize(filled);
  }
  note_buffered(filled);
  return chunk;
}

void CsvChunkSource::reset() {
  if (!file_) throw NotRewindable("stream input cannot be rewound");
  in_->clear();
  in_->seekg(data_start_);
  if (!*in_) throw ReadError("failed to rewind input");
  next_row_ = 0;
  line_number_ = 1;
  exhausted_ = false;
}

Table read_csv_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ReadError("cannot open '" + path.string() + "'");
  Table table;
  std::string line;
  std::vector<std::string_view> fields;
  if (!std::getline(in, line)) throw ReadError("missing header row");
  split_fields(line, fields);
  for (const auto f : fields) table.columns.push_back(unquote(f));
  std::vector<double> values;
  std::int64_t rows = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    split_fields(line, fields);
    if (fields.size() != table.columns.size()) {
      throw ParseError(static_cast<std::size_t>(rows + 1), "*", "wrong number of fields");
    }
    for (std::size_t j = 0; j < fields.size(); ++j) {
      values.push_back(parse_number(fields[j], rows + 1, table.columns[j]));
    }
    ++rows;
  }
  const auto k = static_cast<Eigen::Index>(table.columns.size());
  table.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                Eigen::RowMajor>>(values.data(), rows, k);
  return table;
}

}  // namespace chunkglm
