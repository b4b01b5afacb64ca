#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "livseg/volume.hpp"

namespace livseg {

struct TriMesh {
    std::vector<std::array<double, 3>> vertices;   // mm, index * spacing
    std::vector<std::array<std::uint32_t, 3>> triangles;
    std::uint8_t label = 0;
    std::string material_name;
    std::array<double, 3> color{0.8, 0.8, 0.8}; // diffuse RGB in [0, 1]

    bool empty() const { return triangles.empty(); }
};

// Default material name and colour for a label (1 liver, 2 tumor, 3 vessel).
std::string default_material_name(std::uint8_t label);
std::array<double, 3> default_material_color(std::uint8_t label);

// Classic 256-case marching cubes over the indicator (mask == label) with a
// one-voxel zero border, so every mesh is closed. Vertices are shared along
// cell edges and placed by linear interpolation at `level`; triangles wind
// counter-clockwise seen from outside the foreground. A label missing from
// the mask yields an empty mesh and a warning on std::clog.
// Throws InvalidLevel unless 0 < level < 1.
TriMesh marching_cubes(const LabelVolume &mask, std::uint8_t label, double level = 0.5);

// Wavefront text: "mtllib", then per mesh "g <name>", "usemtl <name>", its
// "v" lines (fixed, 6 decimals) and 1-based "f" lines offset by the vertex
// count of the meshes before it.
std::string obj_text(std::span<const TriMesh> meshes, const std::string &mtl_file_name);
// One "newmtl <name>" + "Kd r g b" block per mesh.
std::string mtl_text(std::span<const TriMesh> meshes);

// Throws InvalidConfig (empty list, bad material name), DuplicateMaterial,
// IoFailure.
void export_obj(std::span<const TriMesh> meshes, const std::filesystem::path &obj_path,
                const std::filesystem::path &mtl_path);

} // namespace livseg
