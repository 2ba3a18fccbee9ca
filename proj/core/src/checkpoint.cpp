#include "lbridge/checkpoint.hpp"

#include <cstdint>
#include <utility>
#include <vector>

#include "binio.hpp"
#include "lbridge/errors.hpp"

namespace lbridge {

namespace {

constexpr uint32_t kVersion = 1;

void append_params(std::string& out, const ParamMap& params) {
    binio::append_u32(out, static_cast<uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        binio::append_u32(out, static_cast<uint32_t>(name.size()));
        out.append(name);
        binio::append_u32(out, static_cast<uint32_t>(t.rank()));
        for (const int64_t d : t.shape) {
            binio::append_u32(out, static_cast<uint32_t>(d));
        }
        for (const float v : t.data) {
            binio::append_f32(out, v);
        }
    }
}

ParamMap read_params(binio::Reader& r, const std::string& what) {
    const uint32_t count = r.u32();
    ParamMap params;
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = r.u32();
        const std::string name = r.bytes(name_len);
        if (name.empty()) {
            throw DataError(what + ": empty parameter name at byte " +
                            std::to_string(r.offset()));
        }
        const uint32_t rank = r.u32();
        if (rank == 0 || rank > 2) {
            throw DataError(what + ": parameter '" + name + "' has unsupported rank " +
                            std::to_string(rank));
        }
        std::vector<int64_t> shape(rank);
        int64_t numel = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            shape[d] = static_cast<int64_t>(r.u32());
            numel *= shape[d];
        }
        if (numel <= 0) {
            throw DataError(what + ": parameter '" + name + "' has an empty shape");
        }
        Tensor t(shape);
        for (int64_t j = 0; j < numel; ++j) {
            t.data[static_cast<size_t>(j)] = r.f32();
        }
        if (!t.finite()) {
            throw DataError(what + ": parameter '" + name + "' contains non-finite values");
        }
        if (!params.emplace(name, std::move(t)).second) {
            throw DataError(what + ": duplicate parameter '" + name + "'");
        }
    }
    return params;
}

void check_layout(const ParamMap& params,
                  const std::vector<std::pair<std::string, std::vector<int64_t>>>& layout,
                  const std::string& what) {
    if (params.size() != layout.size()) {
        throw DataError(what + ": expected " + std::to_string(layout.size()) +
                        " parameters for this config, found " + std::to_string(params.size()));
    }
    for (const auto& [name, shape] : layout) {
        const auto it = params.find(name);
        if (it == params.end()) {
            throw DataError(what + ": missing parameter '" + name + "'");
        }
        if (it->second.shape != shape) {
            throw DataError(what + ": parameter '" + name + "' has shape " +
                            it->second.shape_str() + ", config implies " +
                            Tensor::shape_str(shape));
        }
    }
}

void check_header(binio::Reader& r, const char* magic, const std::string& what) {
    const std::string m = r.bytes(4);
    if (m != magic) {
        throw DataError(what + ": bad magic '" + m + "', expected '" + magic + "'");
    }
    const uint32_t version = r.u32();
    if (version != kVersion) {
        throw DataError(what + ": unsupported version " + std::to_string(version) +
                        " (expected " + std::to_string(kVersion) + ")");
    }
}

}  // namespace

void save_model(const ToyModel& model, const std::string& path) {
    model.config.validate();
    std::string out;
    out.append("TOYM");
    binio::append_u32(out, kVersion);
    binio::append_u32(out, static_cast<uint32_t>(model.config.vocab_size));
    binio::append_u32(out, static_cast<uint32_t>(model.config.d_model));
    binio::append_u32(out, static_cast<uint32_t>(model.config.n_layers));
    binio::append_u32(out, static_cast<uint32_t>(model.config.n_heads));
    binio::append_u32(out, static_cast<uint32_t>(model.config.context_len));
    binio::append_u32(out, model.config.seed);
    append_params(out, model.params);
    binio::write_file(path, out, "model checkpoint");
}

ToyModel load_model(const std::string& path) {
    const std::string what = "model checkpoint";
    binio::Reader r(binio::read_file(path, what), what);
    check_header(r, "TOYM", what);

    ToyModel m;
    m.config.vocab_size = static_cast<int>(r.u32());
    m.config.d_model = static_cast<int>(r.u32());
    m.config.n_layers = static_cast<int>(r.u32());
    m.config.n_heads = static_cast<int>(r.u32());
    m.config.context_len = static_cast<int>(r.u32());
    m.config.seed = r.u32();
    try {
        m.config.validate();
    } catch (const ShapeError& e) {
        throw DataError(what + ": invalid config: " + e.what());
    }
    m.params = read_params(r, what);
    r.expect_end();
    check_layout(m.params, model_param_layout(m.config), what);
    return m;
}

void save_translator(const TranslatorParams& params, const std::string& path) {
    params.config.validate();
    std::string out;
    out.append("LBTR");
    binio::append_u32(out, kVersion);
    binio::append_u32(out, static_cast<uint32_t>(params.config.d_src));
    binio::append_u32(out, static_cast<uint32_t>(params.config.d_tgt));
    binio::append_u32(out, static_cast<uint32_t>(params.config.d_hidden));
    binio::append_u32(out, static_cast<uint32_t>(params.config.n_heads));
    binio::append_u32(out, static_cast<uint32_t>(params.config.n_slots));
    binio::append_u32(out, params.config.seed);
    binio::append_u32(out, static_cast<uint32_t>(params.config.activation));
    append_params(out, params.params);
    binio::write_file(path, out, "translator checkpoint");
}

TranslatorParams load_translator(const std::string& path) {
    const std::string what = "translator checkpoint";
    binio::Reader r(binio::read_file(path, what), what);
    check_header(r, "LBTR", what);

    TranslatorParams p;
    p.config.d_src = static_cast<int64_t>(r.u32());
    p.config.d_tgt = static_cast<int64_t>(r.u32());
    p.config.d_hidden = static_cast<int64_t>(r.u32());
    p.config.n_heads = static_cast<int>(r.u32());
    p.config.n_slots = static_cast<int>(r.u32());
    p.config.seed = r.u32();
    const uint32_t act = r.u32();
    if (act > static_cast<uint32_t>(Activation::kIdentity)) {
        throw DataError(what + ": unknown activation code " + std::to_string(act));
    }
    p.config.activation = static_cast<Activation>(act);
    try {
        p.config.validate();
    } catch (const ShapeError& e) {
        throw DataError(what + ": invalid config: " + e.what());
    }
    p.params = read_params(r, what);
    r.expect_end();

    std::vector<std::pair<std::string, std::vector<int64_t>>> layout;
    for (const auto& [name, shape] : translator_param_layout(p.config)) {
        layout.emplace_back(name, shape);
    }
    check_layout(p.params, layout, what);
    return p;
}

}  // namespace lbridge
