#pragma once

#include <span>
#include <string>

#include "fidesign/model.hpp"

namespace fidesign {

/// Model file: a JSON document holding the dimensions, controls, emission mask, theta
/// domain and one or more theta slices with every tensor row-major (layouts as in
/// PomdpModel). A family read from a file interpolates linearly between neighbouring
/// slices and is constant beyond the outermost ones. See docs/model-format.md.
std::string model_file_text(const ModelFamily& family, std::span<const double> thetas);
void write_model_file(const std::string& path, const ModelFamily& family, std::span<const double> thetas);

/// Throws a schema Error naming the byte offset for malformed JSON, or the slice and
/// key for a structurally wrong document.
ModelFamily parse_model_text(const std::string& text, const std::string& origin = "model file");
ModelFamily load_model_file(const std::string& path);

/// Reads a whole file; throws a schema Error when it cannot be opened.
std::string read_text_file(const std::string& path);
/// Writes through a temporary file and a rename, so readers never see a partial file.
void write_text_file(const std::string& path, const std::string& text);

}  // namespace fidesign
