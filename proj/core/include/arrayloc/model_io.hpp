#pragma once

#include <filesystem>
#include <iosfwd>
#include <variant>

#include "arrayloc/fusion.hpp"

namespace arrayloc {

// Textual model files:
//
//   arrayloc-model 1
//   kind affine|pca
//   <key> <value>            (scalar header fields)
//   matrix <name> <rows> <cols>
//   <rows lines of cols values, row-major, %.17g>
//   end
//
// Values are printed with 17 significant digits so a load reproduces the
// saved doubles exactly.

void write_model(std::ostream& out, const AffineMap& map);
void write_model(std::ostream& out, const PcaModel& model);

using Model = std::variant<AffineMap, PcaModel>;

/// Throws DataError on malformed input.
Model read_model(std::istream& in);

void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

}  // namespace arrayloc
