// SPDX-License-Identifier: Apache-2.0
#include "dermtrace/vector_index.hpp"

#include "dermtrace/error.hpp"
#include "dermtrace/text.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>

namespace dermtrace {

namespace {

double norm_of(std::span<const float> v)
{
    double s = 0.0;
    for (float x : v)
        s += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(s);
}

double dot_of(std::span<const float> a, std::span<const float> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
}

double clamp_unit(double x)
{
    return std::clamp(x, -1.0, 1.0);
}

template <typename T>
void put_le(std::string& out, T value)
{
    auto bits = std::bit_cast<std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i)
        out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(std::string_view in, std::size_t at)
{
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    if (at + sizeof(T) > in.size())
        throw ParseError("vector file truncated", {});
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        bits |= static_cast<U>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    return std::bit_cast<T>(bits);
}

constexpr std::size_t header_bytes = 4 + 4 + 4 + 4 + 8;

} // namespace

double cosine_similarity(std::span<const float> a, std::span<const float> b)
{
    double na = norm_of(a);
    double nb = norm_of(b);
    if (na == 0.0 || nb == 0.0)
        return 0.0;
    return clamp_unit(dot_of(a, b) / (na * nb));
}

void VectorIndex::add(std::string id, std::span<const float> vec)
{
    if (vec.size() != dim_)
        throw QueryError("vector '" + id + "' has dimension " + std::to_string(vec.size()) + ", index expects "
                         + std::to_string(dim_));
    data_.insert(data_.end(), vec.begin(), vec.end());
    norms_.push_back(norm_of(vec));
    ids_.push_back(std::move(id));
}

void VectorIndex::replace(std::size_t r, std::span<const float> vec)
{
    if (vec.size() != dim_)
        throw QueryError("replacement vector has wrong dimension");
    std::copy(vec.begin(), vec.end(), data_.begin() + static_cast<std::ptrdiff_t>(r * dim_));
    norms_.at(r) = norm_of(vec);
}

std::vector<Neighbor> VectorIndex::search(std::span<const float> query, std::size_t k) const
{
    if (query.size() != dim_)
        throw QueryError("query has dimension " + std::to_string(query.size()) + ", index expects "
                         + std::to_string(dim_));
    if (k == 0)
        throw ContractViolation("search requires k >= 1");
    double qn = norm_of(query);
    std::vector<Neighbor> all(size());
    for (std::size_t r = 0; r < size(); ++r) {
        double sim = 0.0;
        if (qn != 0.0 && norms_[r] != 0.0)
            sim = clamp_unit(dot_of(query, row(r)) / (qn * norms_[r]));
        all[r] = Neighbor{r, sim};
    }
    auto n = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(),
                      [this](const Neighbor& a, const Neighbor& b) {
                          if (a.similarity != b.similarity)
                              return a.similarity > b.similarity;
                          return ids_[a.row] < ids_[b.row];
                      });
    all.resize(n);
    return all;
}

void write_vector_file(const std::filesystem::path& path, std::size_t dimension,
                       const std::vector<std::span<const float>>& rows)
{
    std::string out;
    out.reserve(header_bytes + rows.size() * (8 + dimension * 4));
    out += "DTVF";
    put_le<std::uint32_t>(out, 1);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dimension));
    put_le<std::uint32_t>(out, 0);
    put_le<std::uint64_t>(out, rows.size());
    std::uint64_t data_start = header_bytes + rows.size() * 8;
    for (std::size_t i = 0; i < rows.size(); ++i)
        put_le<std::uint64_t>(out, data_start + i * dimension * 4);
    for (const auto& r : rows) {
        if (r.size() != dimension)
            throw IngestionError("row dimension mismatch while writing vector file");
        for (float x : r)
            put_le<float>(out, x);
    }
    write_file(path, out);
}

std::vector<std::vector<float>> read_vector_file(const std::filesystem::path& path, std::size_t& dimension)
{
    auto in = read_file(path);
    if (in.size() < header_bytes || in.compare(0, 4, "DTVF") != 0)
        throw ParseError(path.string() + ": not a vector file", {});
    if (get_le<std::uint32_t>(in, 4) != 1)
        throw ParseError(path.string() + ": unsupported vector file version", {});
    dimension = get_le<std::uint32_t>(in, 8);
    auto count = get_le<std::uint64_t>(in, 16);
    std::vector<std::vector<float>> rows;
    rows.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        auto offset = get_le<std::uint64_t>(in, header_bytes + i * 8);
        std::vector<float> row(dimension);
        for (std::size_t d = 0; d < dimension; ++d)
            row[d] = get_le<float>(in, offset + d * 4);
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace dermtrace
