#include "csdro/cli/csv_out.hpp"

#include "csdro/common.hpp"

#include <cmath>
#include <cstdio>

namespace csdro::cli {

CsvWriter::CsvWriter(std::string path, const Provenance& prov, const std::vector<std::string>& header)
    : path_(std::move(path)), tmp_(path_ + ".tmp"), out_(tmp_), columns_(header.size()) {
  if (!out_) throw RuntimeFailure("cannot write '" + tmp_ + "'");
  out_ << "# seed=" << prov.seed << ", config-hash=" << prov.config_hash << "\n";
  row(header);
}

CsvWriter::~CsvWriter() {
  if (!closed_) {
    out_.close();
    std::remove(tmp_.c_str());
  }
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw RuntimeFailure("csv row width mismatch in '" + path_ + "'");
  for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
  out_ << "\n";
}

void CsvWriter::comment(const std::string& text) { out_ << "# " << text << "\n"; }

void CsvWriter::close() {
  out_.close();
  if (!out_) throw RuntimeFailure("write failed for '" + tmp_ + "'");
  if (std::rename(tmp_.c_str(), path_.c_str()) != 0) throw RuntimeFailure("cannot rename to '" + path_ + "'");
  closed_ = true;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  return format_double(v);
}

std::string fmt(long v) { return std::to_string(v); }
std::string fmt(std::size_t v) { return std::to_string(v); }

std::vector<std::string> read_data_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') rows.push_back(line);
  return rows;
}

}  // namespace csdro::cli
