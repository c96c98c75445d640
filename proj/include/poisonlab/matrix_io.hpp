#pragma once

// Dense CSV grid and JSON serialization for Mat / Vect. CSV values use the
// shortest round-trip representation, so a read-back reproduces every bit.

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"
#include "poisonlab/linalg.hpp"

namespace poisonlab {

/// Shortest text that reads back to the same double.
std::string format_double(double v);

std::string to_csv(const Mat& m);
Mat mat_from_csv(std::string_view text);

/// Vectors are stored as a single column, one value per line.
std::string to_csv(const Vect& v);
Vect vect_from_csv(std::string_view text);

nlohmann::json to_json(const Mat& m);
Mat mat_from_json(const nlohmann::json& j);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

inline void write_csv(const std::filesystem::path& path, const Mat& m) { write_text(path, to_csv(m)); }
inline void write_csv(const std::filesystem::path& path, const Vect& v) { write_text(path, to_csv(v)); }
inline Mat read_mat_csv(const std::filesystem::path& path) { return mat_from_csv(read_text(path)); }
inline Vect read_vect_csv(const std::filesystem::path& path) { return vect_from_csv(read_text(path)); }

}  // namespace poisonlab
