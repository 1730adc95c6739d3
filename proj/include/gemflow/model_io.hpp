#pragma once

#include <string>

#include "gemflow/graph.hpp"

namespace gemflow {

// Model format: a JSON manifest next to a raw little-endian weights blob.
// Quantization scales are stored as shortest-round-trip decimal strings so a
// save/load cycle is bit-exact.
Graph load_model(const std::string& manifest_path);
void save_model(const Graph& g, const std::string& manifest_path,
                const std::string& blob_filename = "");

// Shortest decimal string that parses back to exactly the same f32.
std::string float_to_string(float v);
float float_from_string(const std::string& s);

}  // namespace gemflow
