#include "livseg/mesh_export.hpp"

#include <fstream>
#include <iostream>
#include <set>
#include <unordered_map>

#include "livseg/format.hpp"
#include "mc_tables.hpp"

namespace livseg {

namespace {

// Corner offsets and edge endpoints in the table's numbering.
constexpr std::array<std::array<std::size_t, 3>, 8> kCorner{{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
}};
constexpr std::array<std::array<int, 2>, 12> kEdge{{
    {0, 1}, {1, 2}, {3, 2}, {0, 3}, {4, 5}, {5, 6}, {7, 6}, {4, 7}, {0, 4}, {1, 5}, {2, 6}, {3, 7},
}};

void check_material_name(const std::string &name) {
    if (name.empty() || name.find_first_of(" \t\r\n") != std::string::npos) {
        throw Error(ErrorKind::InvalidConfig, "material name '" + name + "' must be a single nonempty token");
    }
}

void write_text(const std::filesystem::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot create '" + path.string() + "'");
    out << text;
    if (!out) throw Error(ErrorKind::IoFailure, "write failed for '" + path.string() + "'");
}

} // namespace

std::string default_material_name(std::uint8_t label) {
    switch (label) {
    case 1: return "liver";
    case 2: return "tumor";
    case 3: return "vessel";
    default: return "label_" + std::to_string(label);
    }
}

std::array<double, 3> default_material_color(std::uint8_t label) {
    switch (label) {
    case 1: return {0.60, 0.25, 0.20};
    case 2: return {0.90, 0.80, 0.20};
    case 3: return {0.20, 0.35, 0.85};
    default: return {0.70, 0.70, 0.70};
    }
}

TriMesh marching_cubes(const LabelVolume &mask, std::uint8_t label, double level) {
    validate(mask);
    if (!(level > 0.0 && level < 1.0)) {
        throw Error(ErrorKind::InvalidLevel, "level must lie in (0, 1), got " + std::to_string(level));
    }
    TriMesh mesh;
    mesh.label = label;
    mesh.material_name = default_material_name(label);
    mesh.color = default_material_color(label);

    // Indicator with a zero border.
    const Dims pd{mask.dims[0] + 2, mask.dims[1] + 2, mask.dims[2] + 2};
    std::vector<std::uint8_t> ind(pd[0] * pd[1] * pd[2], 0);
    auto pidx = [&](std::size_t x, std::size_t y, std::size_t z) { return x + pd[0] * (y + pd[1] * z); };
    bool present = false;
    for (std::size_t z = 0; z < mask.dims[2]; ++z)
        for (std::size_t y = 0; y < mask.dims[1]; ++y)
            for (std::size_t x = 0; x < mask.dims[0]; ++x)
                if (mask.at(x, y, z) == label) {
                    ind[pidx(x + 1, y + 1, z + 1)] = 1;
                    present = true;
                }
    if (!present) {
        std::clog << "warning: " << to_string(ErrorKind::LabelAbsent) << ": label " << int(label)
                  << " does not occur in the mask; emitting an empty mesh\n";
        return mesh;
    }

    std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;
    auto vertex_on = [&](const std::array<std::size_t, 3> &a, const std::array<std::size_t, 3> &b) {
        std::size_t axis = 0;
        while (a[axis] == b[axis]) ++axis;
        const std::uint64_t key = 3 * static_cast<std::uint64_t>(pidx(a[0], a[1], a[2])) + axis;
        const auto [it, inserted] = edge_vertex.try_emplace(key, static_cast<std::uint32_t>(mesh.vertices.size()));
        if (inserted) {
            const double va = ind[pidx(a[0], a[1], a[2])];
            const double vb = ind[pidx(b[0], b[1], b[2])];
            const double t = (level - va) / (vb - va);
            std::array<double, 3> p{};
            for (std::size_t i = 0; i < 3; ++i) {
                const double coord = static_cast<double>(a[i]) + (i == axis ? t : 0.0) - 1.0;
                p[i] = coord * mask.spacing[i];
            }
            mesh.vertices.push_back(p);
        }
        return it->second;
    };

    for (std::size_t z = 0; z + 1 < pd[2]; ++z) {
        for (std::size_t y = 0; y + 1 < pd[1]; ++y) {
            for (std::size_t x = 0; x + 1 < pd[0]; ++x) {
                unsigned cube = 0;
                for (std::size_t c = 0; c < 8; ++c) {
                    if (ind[pidx(x + kCorner[c][0], y + kCorner[c][1], z + kCorner[c][2])] < level) cube |= 1u << c;
                }
                if (cube == 0 || cube == 255) continue;
                const auto &row = detail::kTriangleTable[cube];
                for (std::size_t t = 0; t < 16 && row[t] >= 0; t += 3) {
                    std::array<std::uint32_t, 3> tri{};
                    for (std::size_t k = 0; k < 3; ++k) {
                        const auto &e = kEdge[static_cast<std::size_t>(row[t + k])];
                        const auto &ca = kCorner[static_cast<std::size_t>(e[0])];
                        const auto &cb = kCorner[static_cast<std::size_t>(e[1])];
                        tri[k] = vertex_on({x + ca[0], y + ca[1], z + ca[2]}, {x + cb[0], y + cb[1], z + cb[2]});
                    }
                    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) continue;
                    // Table order is already counter-clockwise seen from the
                    // below-level (background) side.
                    mesh.triangles.push_back(tri);
                }
            }
        }
    }
    return mesh;
}

std::string obj_text(std::span<const TriMesh> meshes, const std::string &mtl_file_name) {
    std::string out = "# livseg marching-cubes export\n";
    out += "mtllib " + mtl_file_name + "\n";
    std::size_t offset = 1;
    for (const auto &m : meshes) {
        out += "g " + m.material_name + "\n";
        out += "usemtl " + m.material_name + "\n";
        for (const auto &v : m.vertices) {
            out += "v " + format_fixed(v[0], 6) + ' ' + format_fixed(v[1], 6) + ' ' + format_fixed(v[2], 6) + '\n';
        }
        for (const auto &t : m.triangles) {
            out += "f " + std::to_string(t[0] + offset) + ' ' + std::to_string(t[1] + offset) + ' ' +
                   std::to_string(t[2] + offset) + '\n';
        }
        offset += m.vertices.size();
    }
    return out;
}

std::string mtl_text(std::span<const TriMesh> meshes) {
    std::string out = "# livseg materials\n";
    for (const auto &m : meshes) {
        out += "newmtl " + m.material_name + "\n";
        out += "Kd " + format_fixed(m.color[0], 6) + ' ' + format_fixed(m.color[1], 6) + ' ' +
               format_fixed(m.color[2], 6) + "\n";
    }
    return out;
}

void export_obj(std::span<const TriMesh> meshes, const std::filesystem::path &obj_path,
                const std::filesystem::path &mtl_path) {
    if (meshes.empty()) throw Error(ErrorKind::InvalidConfig, "nothing to export");
    std::set<std::string> names;
    for (const auto &m : meshes) {
        check_material_name(m.material_name);
        if (!names.insert(m.material_name).second) {
            throw Error(ErrorKind::DuplicateMaterial, "material '" + m.material_name + "' appears twice");
        }
        for (const auto &t : m.triangles) {
            for (auto i : t) {
                if (i >= m.vertices.size()) throw Error(ErrorKind::InvalidConfig, "triangle index out of range");
            }
        }
    }
    write_text(obj_path, obj_text(meshes, mtl_path.filename().string()));
    write_text(mtl_path, mtl_text(meshes));
}

} // namespace livseg
