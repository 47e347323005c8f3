#pragma once

// PLY reading/writing for point clouds and Gaussian maps, plus plain XYZ text
// clouds.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gaussmap/core.hpp"

namespace gaussmap {

static_assert(std::endian::native == std::endian::little, "binary PLY code assumes a little-endian host");

namespace ply_detail {

enum class Scalar { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

inline int scalar_size(Scalar s) {
    switch (s) {
    case Scalar::Int8: case Scalar::UInt8: return 1;
    case Scalar::Int16: case Scalar::UInt16: return 2;
    case Scalar::Int32: case Scalar::UInt32: case Scalar::Float32: return 4;
    case Scalar::Float64: return 8;
    }
    return 0;
}

inline bool parse_scalar(const std::string &t, Scalar &out) {
    static const std::pair<const char *, Scalar> names[] = {
        {"char", Scalar::Int8},     {"int8", Scalar::Int8},       {"uchar", Scalar::UInt8},
        {"uint8", Scalar::UInt8},   {"short", Scalar::Int16},     {"int16", Scalar::Int16},
        {"ushort", Scalar::UInt16}, {"uint16", Scalar::UInt16},   {"int", Scalar::Int32},
        {"int32", Scalar::Int32},   {"uint", Scalar::UInt32},     {"uint32", Scalar::UInt32},
        {"float", Scalar::Float32}, {"float32", Scalar::Float32}, {"double", Scalar::Float64},
        {"float64", Scalar::Float64}};
    for (const auto &[name, s] : names)
        if (t == name) {
            out = s;
            return true;
        }
    return false;
}

inline double decode(const unsigned char *p, Scalar s) {
    switch (s) {
    case Scalar::Int8: return static_cast<std::int8_t>(p[0]);
    case Scalar::UInt8: return p[0];
    case Scalar::Int16: { std::int16_t v; std::memcpy(&v, p, 2); return v; }
    case Scalar::UInt16: { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
    case Scalar::Int32: { std::int32_t v; std::memcpy(&v, p, 4); return v; }
    case Scalar::UInt32: { std::uint32_t v; std::memcpy(&v, p, 4); return v; }
    case Scalar::Float32: { float v; std::memcpy(&v, p, 4); return v; }
    case Scalar::Float64: { double v; std::memcpy(&v, p, 8); return v; }
    }
    return 0;
}

struct Property {
    std::string name;
    Scalar type = Scalar::Float32;
    bool is_list = false;
};

struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<Property> props;

    int find(const std::string &n) const {
        for (std::size_t i = 0; i < props.size(); ++i)
            if (props[i].name == n) return static_cast<int>(i);
        return -1;
    }
    std::size_t row_bytes() const {
        std::size_t b = 0;
        for (const auto &p : props) b += scalar_size(p.type);
        return b;
    }
};

enum class Format { Ascii, BinaryLE };

struct Header {
    Format format = Format::Ascii;
    std::vector<Element> elements;
    std::size_t lines = 0; // header line count, for ascii error positions
};

inline Header read_header(std::istream &in, const std::string &src) {
    Header h;
    std::string line;
    if (!std::getline(in, line) || (line != "ply" && line != "ply\r"))
        throw ParseError(src, 1, 0, "missing 'ply' magic");
    h.lines = 1;
    bool have_format = false;
    while (true) {
        if (!std::getline(in, line)) throw ParseError(src, h.lines, 0, "header ended before end_header");
        ++h.lines;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (kw.empty() || kw == "comment" || kw == "obj_info") continue;
        if (kw == "end_header") break;
        if (kw == "format") {
            std::string f, ver;
            ls >> f >> ver;
            if (f == "ascii") h.format = Format::Ascii;
            else if (f == "binary_little_endian") h.format = Format::BinaryLE;
            else throw ParseError(src, h.lines, 0, "unsupported format '" + f + "'");
            have_format = true;
        } else if (kw == "element") {
            Element e;
            long long count = -1;
            ls >> e.name >> count;
            if (e.name.empty() || count < 0 || ls.fail()) throw ParseError(src, h.lines, 0, "malformed element line");
            e.count = static_cast<std::size_t>(count);
            h.elements.push_back(e);
        } else if (kw == "property") {
            if (h.elements.empty()) throw ParseError(src, h.lines, 0, "property before any element");
            Property p;
            std::string t;
            ls >> t;
            if (t == "list") {
                std::string ct, it;
                ls >> ct >> it >> p.name;
                p.is_list = true;
            } else {
                if (!parse_scalar(t, p.type)) throw ParseError(src, h.lines, 0, "unsupported property type '" + t + "'");
                ls >> p.name;
            }
            if (p.name.empty()) throw ParseError(src, h.lines, 0, "property without a name");
            h.elements.back().props.push_back(p);
        } else {
            throw ParseError(src, h.lines, 0, "unknown header keyword '" + kw + "'");
        }
    }
    if (!have_format) throw ParseError(src, h.lines, 0, "missing format line");
    return h;
}

// Reads every row of the vertex element (other scalar-only elements before it
// are skipped) and hands each row's decoded values to `row`.
template <typename RowFn>
void read_vertex_rows(std::istream &in, const Header &h, const std::string &src, RowFn &&row) {
    std::size_t line_no = h.lines;
    std::size_t offset = static_cast<std::size_t>(in.tellg());
    std::vector<double> vals;
    for (const Element &e : h.elements) {
        const bool is_vertex = e.name == "vertex";
        for (const auto &p : e.props)
            if (p.is_list)
                throw ParseError(src, line_no, 0, "list property '" + p.name + "' in element '" + e.name + "' is not supported");
        vals.assign(e.props.size(), 0.0);
        if (h.format == Format::Ascii) {
            std::string line;
            for (std::size_t r = 0; r < e.count; ++r) {
                if (!std::getline(in, line)) throw ParseError(src, line_no + 1, 0, "unexpected end of file in element '" + e.name + "'");
                ++line_no;
                std::istringstream ls(line);
                for (std::size_t k = 0; k < vals.size(); ++k) {
                    std::string tok;
                    if (!(ls >> tok)) throw ParseError(src, line_no, 0, "too few values");
                    try {
                        std::size_t used = 0;
                        vals[k] = std::stod(tok, &used);
                        if (used != tok.size()) throw std::invalid_argument(tok);
                    } catch (const std::exception &) {
                        throw ParseError(src, line_no, 0, "bad number '" + tok + "'");
                    }
                }
                if (is_vertex) row(vals, line_no, std::size_t{0});
            }
        } else {
            const std::size_t rb = e.row_bytes();
            std::vector<unsigned char> buf(rb);
            for (std::size_t r = 0; r < e.count; ++r) {
                if (!in.read(reinterpret_cast<char *>(buf.data()), static_cast<std::streamsize>(rb)))
                    throw ParseError(src, 0, offset, "unexpected end of file in element '" + e.name + "'");
                std::size_t at = 0;
                for (std::size_t k = 0; k < vals.size(); ++k) {
                    vals[k] = decode(buf.data() + at, e.props[k].type);
                    at += scalar_size(e.props[k].type);
                }
                if (is_vertex) row(vals, std::size_t{0}, offset);
                offset += rb;
            }
        }
        if (is_vertex) return;
    }
}

inline std::ifstream open_in(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    return in;
}

inline std::ofstream open_out(const std::string &path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + path + "'");
    return out;
}

inline void put_f32(std::ostream &out, double v) {
    const float f = static_cast<float>(v);
    out.write(reinterpret_cast<const char *>(&f), 4);
}

} // namespace ply_detail

inline PointCloud load_xyz(const std::string &path) {
    std::ifstream in = ply_detail::open_in(path);
    PointCloud cloud;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ls(line);
        Vec3 p;
        if (!(ls >> p.x() >> p.y() >> p.z())) throw ParseError(path, line_no, 0, "expected three coordinates");
        if (!p.allFinite()) throw ParseError(path, line_no, 0, "non-finite coordinate");
        cloud.points.push_back(p);
    }
    return cloud;
}

/// ASCII or binary little-endian PLY with float/double x, y, z; anything
/// without a .ply extension is read as whitespace-separated XYZ text.
inline PointCloud load_point_cloud(const std::string &path) {
    if (path.size() < 4 || path.compare(path.size() - 4, 4, ".ply") != 0) return load_xyz(path);
    std::ifstream in = ply_detail::open_in(path);
    const ply_detail::Header h = ply_detail::read_header(in, path);
    PointCloud cloud;
    int ix = -1, iy = -1, iz = -1;
    for (const auto &e : h.elements) {
        if (e.name != "vertex") continue;
        ix = e.find("x"), iy = e.find("y"), iz = e.find("z");
        if (ix < 0 || iy < 0 || iz < 0) throw ParseError(path, h.lines, 0, "vertex element lacks x, y or z");
        for (int i : {ix, iy, iz}) {
            const auto t = e.props[i].type;
            if (e.props[i].is_list || (t != ply_detail::Scalar::Float32 && t != ply_detail::Scalar::Float64))
                throw ParseError(path, h.lines, 0, "coordinate property '" + e.props[i].name + "' must be float or double");
        }
        cloud.points.reserve(e.count);
    }
    if (ix < 0) throw ParseError(path, h.lines, 0, "no vertex element");
    ply_detail::read_vertex_rows(in, h, path, [&](const std::vector<double> &v, std::size_t line, std::size_t off) {
        const Vec3 p(v[ix], v[iy], v[iz]);
        if (!p.allFinite()) throw ParseError(path, line, off, "non-finite coordinate");
        cloud.points.push_back(p);
    });
    return cloud;
}

/// Binary little-endian float32 x, y, z.
inline void save_point_cloud(const PointCloud &cloud, const std::string &path) {
    std::ofstream out = ply_detail::open_out(path);
    out << "ply\nformat binary_little_endian 1.0\nelement vertex " << cloud.size()
        << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
    for (const auto &p : cloud.points)
        for (int i = 0; i < 3; ++i) ply_detail::put_f32(out, p[i]);
    if (!out) throw Error("write failed for '" + path + "'");
}

/// Property names of the Gaussian map layout, in file order.
inline const std::vector<std::string> &gaussian_ply_properties() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n{"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"};
        for (int i = 0; i < 24; ++i) n.push_back("f_rest_" + std::to_string(i));
        n.push_back("opacity");
        for (int i = 0; i < 3; ++i) n.push_back("scale_" + std::to_string(i));
        for (int i = 0; i < 4; ++i) n.push_back("rot_" + std::to_string(i));
        return n;
    }();
    return names;
}

/// f_rest is channel-major: f_rest_{8c + j - 1} holds sh(c, j).
inline void export_gaussians(const Scene &scene, const std::string &path) {
    std::ofstream out = ply_detail::open_out(path);
    out << "ply\nformat binary_little_endian 1.0\nelement vertex " << scene.size() << "\n";
    for (const auto &n : gaussian_ply_properties()) out << "property float " << n << "\n";
    out << "end_header\n";
    using ply_detail::put_f32;
    for (const auto &g : scene) {
        for (int i = 0; i < 3; ++i) put_f32(out, g.mean[i]);
        for (int c = 0; c < 3; ++c) put_f32(out, g.sh(c, 0));
        for (int c = 0; c < 3; ++c)
            for (int j = 1; j < 9; ++j) put_f32(out, g.sh(c, j));
        put_f32(out, g.opacity_logit);
        for (int i = 0; i < 3; ++i) put_f32(out, g.scale[i]);
        for (int i = 0; i < 4; ++i) put_f32(out, g.rotation[i]);
    }
    if (!out) throw Error("write failed for '" + path + "'");
}

inline Scene load_gaussians(const std::string &path) {
    std::ifstream in = ply_detail::open_in(path);
    const ply_detail::Header h = ply_detail::read_header(in, path);
    const auto &names = gaussian_ply_properties();
    const ply_detail::Element *vertex = nullptr;
    for (const auto &e : h.elements)
        if (e.name == "vertex") vertex = &e;
    if (!vertex) throw ParseError(path, h.lines, 0, "no vertex element");
    std::vector<int> col(names.size());
    for (std::size_t i = 0; i < names.size(); ++i) {
        col[i] = vertex->find(names[i]);
        if (col[i] < 0) throw ParseError(path, h.lines, 0, "missing property '" + names[i] + "'");
    }
    for (const auto &p : vertex->props)
        if (std::find(names.begin(), names.end(), p.name) == names.end())
            throw ParseError(path, h.lines, 0,
                             "unexpected property '" + p.name + "' (expected " + std::to_string(names.size()) +
                                 " vertex properties, found " + std::to_string(vertex->props.size()) + ")");
    if (vertex->props.size() != names.size()) throw ParseError(path, h.lines, 0, "duplicate vertex properties");
    Scene scene;
    scene.reserve(vertex->count);
    ply_detail::read_vertex_rows(in, h, path, [&](const std::vector<double> &v, std::size_t line, std::size_t off) {
        std::size_t k = 0;
        auto next = [&] {
            const double x = v[col[k++]];
            if (!std::isfinite(x)) throw ParseError(path, line, off, "non-finite value");
            return x;
        };
        SurfaceGaussian g;
        for (int i = 0; i < 3; ++i) g.mean[i] = next();
        for (int c = 0; c < 3; ++c) g.sh(c, 0) = next();
        for (int c = 0; c < 3; ++c)
            for (int j = 1; j < 9; ++j) g.sh(c, j) = next();
        g.opacity_logit = next();
        for (int i = 0; i < 3; ++i) g.scale[i] = next();
        for (int i = 0; i < 4; ++i) g.rotation[i] = next();
        scene.push_back(g);
    });
    return scene;
}

} // namespace gaussmap
