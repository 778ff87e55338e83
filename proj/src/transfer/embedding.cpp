#include "s2h/embedding.hpp"

#include <string>

#include "s2h/csv.hpp"
#include "s2h/error.hpp"

namespace s2h {

void EmbeddingTable::push(std::int64_t user, std::int64_t window_start, std::span<const double> v) {
  if (rows() == 0 && dim == 0) dim = v.size();
  if (v.size() != dim) throw DimensionError("embedding row width " + std::to_string(v.size()) + " != " + std::to_string(dim));
  users.push_back(user);
  window_starts.push_back(window_start);
  values.insert(values.end(), v.begin(), v.end());
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  std::string out = "user_id,window_start";
  for (std::size_t j = 0; j < table.dim; ++j) out += ",e" + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < table.rows(); ++i) {
    out += std::to_string(table.users[i]);
    out += ',';
    out += std::to_string(table.window_starts[i]);
    for (double v : table.row(i)) {
      out += ',';
      out += csv::num(v);
    }
    out += '\n';
  }
  csv::write_file(path, out);
}

EmbeddingTable read_embeddings(const std::filesystem::path& path) {
  const std::string text = csv::read_file(path);
  csv::LineReader lines(text);
  std::string_view line;
  if (!lines.next(line)) throw DataError(path.string() + ": empty file");
  const auto header = csv::split(line);
  if (header.size() < 3 || header[0] != "user_id" || header[1] != "window_start")
    throw DataError(path.string() + ": unexpected header");
  EmbeddingTable t;
  t.dim = header.size() - 2;
  for (std::size_t j = 0; j < t.dim; ++j)
    if (header[j + 2] != "e" + std::to_string(j)) throw DataError(path.string() + ": unexpected header");
  std::vector<double> row(t.dim);
  while (lines.next(line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != t.dim + 2)
      throw DataError(path.string() + " line " + std::to_string(lines.line_number()) + ": wrong field count");
    for (std::size_t j = 0; j < t.dim; ++j) row[j] = csv::to_double(f[j + 2]);
    t.push(csv::to_int(f[0]), csv::to_int(f[1]), row);
  }
  return t;
}

}  // namespace s2h
