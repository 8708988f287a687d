#include "dfsolve/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <unordered_map>

namespace dfsolve {
namespace {

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

double signed_area(const Vec2& a, const Vec2& b, const Vec2& c) {
  return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
}

}  // namespace

std::string_view to_string(BoundaryTag tag) {
  switch (tag) {
    case BoundaryTag::GammaU:
      return "GAMMA_U";
    case BoundaryTag::GammaP:
      return "GAMMA_P";
    case BoundaryTag::Interior:
      break;
  }
  return "INTERIOR";
}

Mesh::Mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> cells,
           std::span<const TaggedFacet> boundary)
    : vertices_(std::move(vertices)), cells_(std::move(cells)) {
  const int nv = n_vertices();
  if (cells_.empty()) throw ValidationError("mesh has no cells");

  for (std::size_t c = 0; c < cells_.size(); ++c) {
    auto& cell = cells_[c];
    for (int v : cell) {
      if (v < 0 || v >= nv) {
        throw ValidationError("cell " + std::to_string(c) + " references missing vertex " +
                              std::to_string(v));
      }
    }
    const double area = signed_area(vertices_[cell[0]], vertices_[cell[1]], vertices_[cell[2]]);
    const double scale = (vertices_[cell[1]] - vertices_[cell[0]]).squaredNorm() +
                         (vertices_[cell[2]] - vertices_[cell[0]]).squaredNorm();
    if (std::abs(area) <= 1e-14 * scale) {
      throw ValidationError("cell " + std::to_string(c) + " is degenerate");
    }
    if (area < 0) std::swap(cell[1], cell[2]);
  }

  std::unordered_map<std::uint64_t, int> facet_of;
  facet_of.reserve(cells_.size() * 2);
  cell_facets_.resize(cells_.size());
  cell_facet_signs_.resize(cells_.size());
  for (int c = 0; c < n_cells(); ++c) {
    const auto& cell = cells_[c];
    for (int i = 0; i < 3; ++i) {
      const int from = cell[(i + 1) % 3];
      const int to = cell[(i + 2) % 3];
      auto [it, inserted] = facet_of.try_emplace(edge_key(from, to), n_facets());
      if (inserted) {
        facets_.push_back({std::min(from, to), std::max(from, to)});
        facet_cells_.push_back({c, -1});
      } else {
        auto& adj = facet_cells_[it->second];
        if (adj[1] >= 0) {
          throw ValidationError("facet (" + std::to_string(from) + ", " + std::to_string(to) +
                                ") is shared by more than two cells");
        }
        adj[1] = c;
      }
      cell_facets_[c][i] = it->second;
      cell_facet_signs_[c][i] = from < to ? 1 : -1;
    }
  }

  tags_.assign(facets_.size(), BoundaryTag::Interior);
  for (const auto& tf : boundary) {
    auto it = facet_of.find(edge_key(tf.a, tf.b));
    if (it == facet_of.end()) {
      throw ValidationError("tagged facet (" + std::to_string(tf.a) + ", " + std::to_string(tf.b) +
                            ") is not a mesh edge");
    }
    const int f = it->second;
    if (!is_boundary(f)) {
      throw ValidationError("tagged facet (" + std::to_string(tf.a) + ", " +
                            std::to_string(tf.b) + ") is interior");
    }
    if (tf.tag == BoundaryTag::Interior) {
      throw ValidationError("boundary facet cannot carry the interior tag");
    }
    if (tags_[f] != BoundaryTag::Interior) {
      throw ValidationError("facet (" + std::to_string(tf.a) + ", " + std::to_string(tf.b) +
                            ") is tagged twice");
    }
    tags_[f] = tf.tag;
  }
  for (int f = 0; f < n_facets(); ++f) {
    if (is_boundary(f) && tags_[f] == BoundaryTag::Interior) {
      throw ValidationError("boundary facet (" + std::to_string(facets_[f][0]) + ", " +
                            std::to_string(facets_[f][1]) + ") has no tag");
    }
  }

  for (int c = 0; c < n_cells(); ++c) h_ = std::max(h_, cell_diameter(c));
}

Vec2 Mesh::facet_normal(int f) const {
  const Vec2 t = vertices_[facets_[f][1]] - vertices_[facets_[f][0]];
  return Vec2(t.y(), -t.x()).normalized();
}

double Mesh::facet_length(int f) const {
  return (vertices_[facets_[f][1]] - vertices_[facets_[f][0]]).norm();
}

Vec2 Mesh::facet_point(int f, double t) const {
  return (1.0 - t) * vertices_[facets_[f][0]] + t * vertices_[facets_[f][1]];
}

double Mesh::cell_area(int c) const {
  const auto& k = cells_[c];
  return signed_area(vertices_[k[0]], vertices_[k[1]], vertices_[k[2]]);
}

double Mesh::cell_diameter(int c) const {
  const auto& k = cells_[c];
  return std::max({(vertices_[k[0]] - vertices_[k[1]]).norm(),
                   (vertices_[k[1]] - vertices_[k[2]]).norm(),
                   (vertices_[k[2]] - vertices_[k[0]]).norm()});
}

Vec2 Mesh::cell_centroid(int c) const {
  const auto& k = cells_[c];
  return (vertices_[k[0]] + vertices_[k[1]] + vertices_[k[2]]) / 3.0;
}

double Mesh::total_area() const {
  double sum = 0.0;
  for (int c = 0; c < n_cells(); ++c) sum += cell_area(c);
  return sum;
}

Mat2 Mesh::jacobian(int c) const {
  const auto& k = cells_[c];
  Mat2 j;
  j.col(0) = vertices_[k[1]] - vertices_[k[0]];
  j.col(1) = vertices_[k[2]] - vertices_[k[0]];
  return j;
}

Vec2 Mesh::to_physical(int c, const Vec2& ref) const {
  return vertices_[cells_[c][0]] + jacobian(c) * ref;
}

Vec2 Mesh::to_reference(int c, const Vec2& x) const {
  return jacobian(c).inverse() * (x - vertices_[cells_[c][0]]);
}

std::vector<TaggedFacet> Mesh::tagged_boundary() const {
  std::vector<TaggedFacet> out;
  for (int f = 0; f < n_facets(); ++f) {
    if (is_boundary(f)) out.push_back({facets_[f][0], facets_[f][1], tags_[f]});
  }
  return out;
}

Mesh structured_rectangle(int nx, int ny, const Rectangle& extent, const SideTags& tags,
                          Split split) {
  if (nx < 1 || ny < 1) throw std::invalid_argument("subdivision counts must be positive");
  if (!(extent.x1 > extent.x0) || !(extent.y1 > extent.y0)) {
    throw std::invalid_argument("rectangle must have positive side lengths");
  }
  const double dx = (extent.x1 - extent.x0) / nx;
  const double dy = (extent.y1 - extent.y0) / ny;
  std::vector<Vec2> vertices;
  auto grid = [nx](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) vertices.emplace_back(extent.x0 + i * dx, extent.y0 + j * dy);
  }
  std::vector<std::array<int, 3>> cells;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int v00 = grid(i, j), v10 = grid(i + 1, j), v01 = grid(i, j + 1),
                v11 = grid(i + 1, j + 1);
      if (split == Split::Diagonal) {
        cells.push_back({v00, v10, v11});
        cells.push_back({v00, v11, v01});
      } else {
        const int centre = static_cast<int>(vertices.size());
        vertices.emplace_back(extent.x0 + (i + 0.5) * dx, extent.y0 + (j + 0.5) * dy);
        cells.push_back({v00, v10, centre});
        cells.push_back({v10, v11, centre});
        cells.push_back({v11, v01, centre});
        cells.push_back({v01, v00, centre});
      }
    }
  }
  std::vector<TaggedFacet> boundary;
  for (int i = 0; i < nx; ++i) {
    boundary.push_back({grid(i, 0), grid(i + 1, 0), tags.bottom});
    boundary.push_back({grid(i, ny), grid(i + 1, ny), tags.top});
  }
  for (int j = 0; j < ny; ++j) {
    boundary.push_back({grid(0, j), grid(0, j + 1), tags.left});
    boundary.push_back({grid(nx, j), grid(nx, j + 1), tags.right});
  }
  return Mesh(std::move(vertices), std::move(cells), boundary);
}

Mesh refine_uniform(const Mesh& coarse) {
  const int nv = coarse.n_vertices();
  std::vector<Vec2> vertices = coarse.vertices();
  vertices.reserve(nv + coarse.n_facets());
  for (int f = 0; f < coarse.n_facets(); ++f) vertices.push_back(coarse.facet_point(f, 0.5));

  std::vector<std::array<int, 3>> cells;
  cells.reserve(4 * coarse.n_cells());
  std::vector<int> parents;
  parents.reserve(4 * coarse.n_cells());
  for (int c = 0; c < coarse.n_cells(); ++c) {
    const auto& v = coarse.cell(c);
    const auto& f = coarse.cell_facets(c);
    const int m0 = nv + f[0], m1 = nv + f[1], m2 = nv + f[2];
    cells.push_back({v[0], m2, m1});
    cells.push_back({m2, v[1], m0});
    cells.push_back({m1, m0, v[2]});
    cells.push_back({m0, m1, m2});
    parents.insert(parents.end(), 4, c);
  }

  std::vector<TaggedFacet> boundary;
  for (int f = 0; f < coarse.n_facets(); ++f) {
    if (!coarse.is_boundary(f)) continue;
    const auto& e = coarse.facet(f);
    boundary.push_back({e[0], nv + f, coarse.facet_tag(f)});
    boundary.push_back({nv + f, e[1], coarse.facet_tag(f)});
  }
  Mesh fine(std::move(vertices), std::move(cells), boundary);
  fine.parents_ = std::move(parents);
  return fine;
}

Mesh read_mesh(std::istream& in) {
  int line_no = 0;
  std::string line;
  auto next = [&]() -> std::istringstream {
    while (std::getline(in, line)) {
      ++line_no;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      return std::istringstream(line);
    }
    throw ParseError(line_no, "unexpected end of file");
  };
  auto section = [&](std::string_view keyword) {
    auto ss = next();
    std::string word;
    long count = -1;
    ss >> word >> count;
    if (word != keyword || ss.fail() || count < 0) {
      throw ParseError(line_no, "expected '" + std::string(keyword) + " <count>'");
    }
    return count;
  };

  {
    auto ss = next();
    std::string magic, version;
    ss >> magic >> version;
    if (magic != "forchheimer-mesh" || version != "v1") {
      throw ParseError(line_no, "missing 'forchheimer-mesh v1' header");
    }
  }

  std::vector<Vec2> vertices(section("vertices"));
  for (auto& v : vertices) {
    auto ss = next();
    ss >> v.x() >> v.y();
    if (ss.fail()) throw ParseError(line_no, "expected vertex coordinates 'x y'");
  }
  std::vector<std::array<int, 3>> cells(section("cells"));
  for (auto& c : cells) {
    auto ss = next();
    ss >> c[0] >> c[1] >> c[2];
    if (ss.fail()) throw ParseError(line_no, "expected cell vertex indices 'i j k'");
  }
  std::vector<TaggedFacet> boundary(section("boundary"));
  for (auto& b : boundary) {
    auto ss = next();
    std::string tag;
    ss >> b.a >> b.b >> tag;
    if (ss.fail()) throw ParseError(line_no, "expected boundary facet 'i j TAG'");
    if (tag == "GAMMA_U") {
      b.tag = BoundaryTag::GammaU;
    } else if (tag == "GAMMA_P") {
      b.tag = BoundaryTag::GammaP;
    } else {
      throw ParseError(line_no, "unknown boundary tag '" + tag + "'");
    }
  }
  return Mesh(std::move(vertices), std::move(cells), boundary);
}

Mesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open mesh file " + path.string());
  return read_mesh(in);
}

void write_mesh(const Mesh& mesh, std::ostream& out) {
  out << "forchheimer-mesh v1\n";
  out << "vertices " << mesh.n_vertices() << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& v : mesh.vertices()) out << v.x() << ' ' << v.y() << '\n';
  out << "cells " << mesh.n_cells() << '\n';
  for (const auto& c : mesh.cells()) out << c[0] << ' ' << c[1] << ' ' << c[2] << '\n';
  const auto boundary = mesh.tagged_boundary();
  out << "boundary " << boundary.size() << '\n';
  for (const auto& b : boundary) out << b.a << ' ' << b.b << ' ' << to_string(b.tag) << '\n';
}

void save_mesh(const Mesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write mesh file " + path.string());
  write_mesh(mesh, out);
  if (!out) throw std::runtime_error("error writing mesh file " + path.string());
}

}  // namespace dfsolve
