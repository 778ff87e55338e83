#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace s2h {

/// Embedding rows keyed by (user, window start). values is [rows, dim] row-major.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<std::int64_t> users;
  std::vector<std::int64_t> window_starts;
  std::vector<double> values;

  std::size_t rows() const { return users.size(); }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
  void push(std::int64_t user, std::int64_t window_start, std::span<const double> v);
};

/// Header `user_id,window_start,e0..e{D-1}`; values written in shortest round-trip form.
void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);
EmbeddingTable read_embeddings(const std::filesystem::path& path);

}  // namespace s2h
