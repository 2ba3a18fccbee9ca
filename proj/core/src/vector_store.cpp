#include "lbridge/vector_store.hpp"

#include <algorithm>
#include <utility>

#include "binio.hpp"
#include "lbridge/errors.hpp"

namespace lbridge {

namespace {
constexpr uint32_t kVersion = 1;
constexpr size_t kHeaderBytes = 4 + 4 + 4 + 8;
}  // namespace

VectorStore make_vector_store(std::vector<uint32_t> ids, Tensor vectors) {
    if (vectors.rank() != 2) {
        throw ShapeError("vector store: expected [count, dim] rows, got " + vectors.shape_str());
    }
    if (static_cast<int64_t>(ids.size()) != vectors.dim(0)) {
        throw ShapeError("vector store: " + std::to_string(ids.size()) + " ids for " +
                         std::to_string(vectors.dim(0)) + " rows");
    }
    if (vectors.dim(1) < 1) {
        throw ShapeError("vector store: dim must be positive");
    }
    VectorStore s;
    s.dim = vectors.dim(1);
    s.ids = std::move(ids);
    s.vectors = std::move(vectors);
    return s;
}

void save_vector_store(const VectorStore& store, const std::string& path) {
    if (store.vectors.rank() != 2 || store.vectors.dim(1) != store.dim ||
        store.vectors.dim(0) != store.count() || store.dim < 1) {
        throw ShapeError("vector store: inconsistent store, dim " + std::to_string(store.dim) +
                         ", ids " + std::to_string(store.ids.size()) + ", rows " +
                         store.vectors.shape_str());
    }
    std::string out;
    out.append("LVEC");
    binio::append_u32(out, kVersion);
    binio::append_u32(out, static_cast<uint32_t>(store.dim));
    binio::append_u64(out, static_cast<uint64_t>(store.count()));
    for (int64_t i = 0; i < store.count(); ++i) {
        binio::append_u32(out, store.ids[static_cast<size_t>(i)]);
        for (int64_t j = 0; j < store.dim; ++j) {
            binio::append_f32(out, store.vectors.at(i, j));
        }
    }
    binio::write_file(path, out, "vector store");
}

VectorStore load_vector_store(const std::string& path) {
    const std::string what = "vector store";
    binio::Reader r(binio::read_file(path, what), what);
    const std::string magic = r.bytes(4);
    if (magic != "LVEC") {
        throw DataError(what + ": bad magic '" + magic + "', expected 'LVEC'");
    }
    const uint32_t version = r.u32();
    if (version != kVersion) {
        throw DataError(what + ": unsupported version " + std::to_string(version) +
                        " (expected " + std::to_string(kVersion) + ")");
    }
    const uint32_t dim = r.u32();
    if (dim == 0) {
        throw DataError(what + ": dim must be positive");
    }
    const uint64_t count = r.u64();

    // The header fully determines the length; check it before touching records
    // so oversized and truncated files both fail with a location.
    const uint64_t expected = kHeaderBytes + count * (4ull + 4ull * dim);
    if (r.size() != expected) {
        throw DataError(what + ": file length " + std::to_string(r.size()) +
                        " does not match header (expected " + std::to_string(expected) +
                        " bytes for count " + std::to_string(count) + ", dim " +
                        std::to_string(dim) + ") at byte " +
                        std::to_string(std::min<uint64_t>(r.size(), expected)));
    }

    VectorStore s;
    s.dim = static_cast<int64_t>(dim);
    s.ids.reserve(count);
    s.vectors = Tensor({static_cast<int64_t>(count), s.dim});
    for (uint64_t i = 0; i < count; ++i) {
        s.ids.push_back(r.u32());
        for (uint32_t j = 0; j < dim; ++j) {
            s.vectors.at(static_cast<int64_t>(i), static_cast<int64_t>(j)) = r.f32();
        }
    }
    r.expect_end();
    return s;
}

}  // namespace lbridge
