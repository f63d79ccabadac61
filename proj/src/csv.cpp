#include "raest/csv.hpp"

#include "raest/error.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

namespace raest {

std::uint64_t fnv1a64(std::string_view data, std::uint64_t h) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

CsvWriter::CsvWriter(const std::filesystem::path& path, const CsvMeta& meta,
                     const std::vector<std::string>& columns)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc), width_(columns.size()) {
  if (!out_) throw Error("cannot open " + path.string() + " for writing");
  out_ << "# raest schema=" << meta.schema << "/" << meta.version << " spec=" << meta.spec_hash
       << " seed=" << meta.seed;
  for (const auto& [k, v] : meta.extra) out_ << " " << k << "=" << v;
  out_ << "\n";
  for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
  out_ << "\n";
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  if (fields.size() != width_) throw Error("csv row width mismatch in " + path_.string());
  for (std::size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << fields[i];
  out_ << "\n";
}

void CsvWriter::close() {
  out_.flush();
  if (!out_) throw Error("write failed: " + path_.string());
  out_.close();
}

CsvTable read_csv(const std::filesystem::path& path, std::string_view schema, int version,
                  const std::vector<std::string>& columns) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("# raest ", 0) != 0) {
    throw ValidationError(path.string() + ": missing raest metadata line");
  }
  CsvTable t;
  std::istringstream meta(line.substr(8));
  std::string tok;
  while (meta >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ValidationError(path.string() + ": malformed metadata '" + tok + "'");
    const std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
    if (k == "schema") {
      const auto slash = v.find('/');
      if (slash == std::string::npos) throw ValidationError(path.string() + ": schema without version");
      t.meta.schema = v.substr(0, slash);
      const std::string ver = v.substr(slash + 1);
      const auto r = std::from_chars(ver.data(), ver.data() + ver.size(), t.meta.version);
      if (r.ec != std::errc{} || r.ptr != ver.data() + ver.size()) {
        throw ValidationError(path.string() + ": bad schema version '" + ver + "'");
      }
    } else if (k == "spec") {
      t.meta.spec_hash = v;
    } else if (k == "seed") {
      const auto r = std::from_chars(v.data(), v.data() + v.size(), t.meta.seed);
      if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) throw ValidationError(path.string() + ": bad seed '" + v + "'");
    } else {
      t.meta.extra[k] = v;
    }
  }
  if (t.meta.schema != schema || t.meta.version != version) {
    throw ValidationError(path.string() + ": schema " + t.meta.schema + "/" + std::to_string(t.meta.version) +
                          ", expected " + std::string(schema) + "/" + std::to_string(version));
  }
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": missing column header");
  t.columns = split(line, ',');
  if (t.columns != columns) throw ValidationError(path.string() + ": column header does not match schema " + std::string(schema));
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = split(line, ',');
    if (fields.size() != columns.size()) throw ValidationError(path.string() + ": row with wrong field count");
    t.rows.push_back(std::move(fields));
  }
  return t;
}

}  // namespace raest
