#pragma once

#include <string>

#include "hypernets/model.hpp"

namespace hypernets {

// Canonical textual form of a spec: one key=value line per field, fixed key
// order, integer lists comma-separated. Parsing accepts exactly this form.
std::string spec_to_text(const ModelSpec& spec);
ModelSpec spec_from_text(const std::string& text);

// Model file: magic "HYPN", format version u16 (little-endian), u32 byte
// length + canonical spec text, then every parameter tensor in canonical
// order as little-endian f64. Round-trips are bit-identical.
void save_model(const std::string& path, const Model& model);
Model load_model(const std::string& path);

}  // namespace hypernets
