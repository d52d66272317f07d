#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace csdro::cli {

struct Provenance {
  std::uint64_t seed = 0;
  std::string config_hash;
};

// Writes to `<path>.tmp` and renames on close(), so readers never see a partial file.
// The first line is `# seed=<seed>, config-hash=<hash>`, then the header row.
class CsvWriter {
 public:
  CsvWriter(std::string path, const Provenance& prov, const std::vector<std::string>& header);
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;
  ~CsvWriter();

  void row(const std::vector<std::string>& cells);
  void comment(const std::string& text);
  void close();

 private:
  std::string path_;
  std::string tmp_;
  std::ofstream out_;
  std::size_t columns_;
  bool closed_ = false;
};

std::string fmt(double v);
std::string fmt(long v);
std::string fmt(std::size_t v);

// Lines of a CSV file that are not `#` comments.
std::vector<std::string> read_data_rows(const std::string& path);

}  // namespace csdro::cli
