#pragma once

#include <string>

#include "pencilrank/pencil.hpp"

namespace pencilrank {

/// Wire formats.  Tensor:        {"m": int, "n": int, "A": [[..]], "B": [[..]]}
///                Decomposition: {"m": int, "n": int,
///                                "terms": [{"alpha": [x,y], "u": [..], "v": [..]}]}
/// Serialization is canonical: fixed key order, 17-significant-digit floats,
/// byte-identical for identical values.

Pencil parse_pencil(const std::string& json_text);
Decomposition parse_decomposition(const std::string& json_text);

Pencil read_pencil_file(const std::string& path);
Decomposition read_decomposition_file(const std::string& path);

std::string pencil_to_json(const Pencil& T);
std::string decomposition_to_json(const Decomposition& D);

std::string format_double(double x);

void write_file(const std::string& path, const std::string& contents);

}  // namespace pencilrank
