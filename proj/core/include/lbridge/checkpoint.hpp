#pragma once

#include <string>

#include "lbridge/toy_model.hpp"
#include "lbridge/translator.hpp"

namespace lbridge {

// Little-endian binary checkpoints. Layout: 4-byte magic ("TOYM" / "LBTR"),
// u32 version (currently 1), u32 config fields, u32 parameter count, then one
// record per parameter: u32 name length, name bytes, u32 rank, u32 dims,
// f32 row-major data. Loads validate magic, version, config ranges, the full
// parameter layout, and finiteness; any trailing bytes are an error.
void save_model(const ToyModel& model, const std::string& path);
ToyModel load_model(const std::string& path);

void save_translator(const TranslatorParams& params, const std::string& path);
TranslatorParams load_translator(const std::string& path);

}  // namespace lbridge
