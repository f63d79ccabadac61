#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace raest {

std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// Shortest decimal form that round-trips a double.
std::string format_double(double v);

// Every CSV starts with one metadata line
//   # raest schema=<name>/<version> spec=<hash> seed=<n> [key=value ...]
// followed by the column header. Readers reject any schema or column
// mismatch.
struct CsvMeta {
  std::string schema;
  int version = 1;
  std::string spec_hash;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> extra;
};

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const CsvMeta& meta, const std::vector<std::string>& columns);
  void row(const std::vector<std::string>& fields);
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t width_;
};

struct CsvTable {
  CsvMeta meta;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::filesystem::path& path, std::string_view schema, int version,
                  const std::vector<std::string>& columns);

}  // namespace raest
