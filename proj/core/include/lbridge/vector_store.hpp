#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lbridge/tensor.hpp"

namespace lbridge {

// Bulk storage for extracted vectors, keyed by prompt id. On disk (little
// endian): "LVEC", u32 version, u32 dim, u64 count, then count records of
// u32 prompt id + dim f32 values. The file length must match the header
// exactly; mismatches are reported with the byte offset where parsing stopped.
struct VectorStore {
    int64_t dim = 0;
    std::vector<uint32_t> ids;
    Tensor vectors;  // [count, dim]

    int64_t count() const { return static_cast<int64_t>(ids.size()); }
};

VectorStore make_vector_store(std::vector<uint32_t> ids, Tensor vectors);

void save_vector_store(const VectorStore& store, const std::string& path);
VectorStore load_vector_store(const std::string& path);

}  // namespace lbridge
