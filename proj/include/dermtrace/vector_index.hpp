// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dermtrace {

/// cos(a, b) in double precision, clamped to [-1, 1]. A zero-norm operand
/// yields 0.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

struct Neighbor {
    std::size_t row = 0;
    double similarity = 0.0;
};

/// Flat exact cosine index. Rows are addressed by insertion order; ids break
/// similarity ties lexicographically.
class VectorIndex {
public:
    explicit VectorIndex(std::size_t dimension = 0) : dim_(dimension) {}

    std::size_t dimension() const noexcept { return dim_; }
    std::size_t size() const noexcept { return ids_.size(); }

    void add(std::string id, std::span<const float> vec);
    void replace(std::size_t row, std::span<const float> vec);

    const std::string& id(std::size_t row) const { return ids_.at(row); }
    std::span<const float> row(std::size_t r) const { return {data_.data() + r * dim_, dim_}; }

    /// Exactly min(k, size()) neighbours, similarity descending.
    std::vector<Neighbor> search(std::span<const float> query, std::size_t k) const;

private:
    std::size_t dim_;
    std::vector<float> data_;
    std::vector<double> norms_;
    std::vector<std::string> ids_;
};

/// Binary vector file (layout in docs/formats.md): little-endian header
/// "DTVF", u32 version, u32 dimension, u32 reserved, u64 count, then `count`
/// u64 row byte offsets, then the f32 rows.
void write_vector_file(const std::filesystem::path& path, std::size_t dimension,
                       const std::vector<std::span<const float>>& rows);
std::vector<std::vector<float>> read_vector_file(const std::filesystem::path& path, std::size_t& dimension);

} // namespace dermtrace
