#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "dfsolve/common.hpp"

namespace dfsolve {

enum class BoundaryTag : std::uint8_t { Interior, GammaU, GammaP };

std::string_view to_string(BoundaryTag tag);

/// A boundary facet given by its two end vertices and its tag.
struct TaggedFacet {
  int a = 0;
  int b = 0;
  BoundaryTag tag = BoundaryTag::GammaU;
};

/// Conforming triangulation of a 2D domain.
///
/// Cells are stored counter-clockwise. Facet `f` joins vertices
/// `facet(f)[0] < facet(f)[1]`; its global unit normal is the tangent
/// (low -> high) rotated clockwise. Local facet `i` of a cell is the one
/// opposite local vertex `i`. The mesh is immutable after construction.
class Mesh {
 public:
  /// Builds facets and incidence, reorients clockwise cells and checks that
  /// every boundary facet receives exactly one tag. Throws ValidationError.
  Mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> cells,
       std::span<const TaggedFacet> boundary);

  int n_vertices() const { return static_cast<int>(vertices_.size()); }
  int n_cells() const { return static_cast<int>(cells_.size()); }
  int n_facets() const { return static_cast<int>(facets_.size()); }

  const Vec2& vertex(int v) const { return vertices_[v]; }
  const std::vector<Vec2>& vertices() const { return vertices_; }
  const std::array<int, 3>& cell(int c) const { return cells_[c]; }
  const std::vector<std::array<int, 3>>& cells() const { return cells_; }
  const std::array<int, 2>& facet(int f) const { return facets_[f]; }
  /// Adjacent cells; the second entry is -1 on the boundary.
  const std::array<int, 2>& facet_cells(int f) const { return facet_cells_[f]; }
  const std::array<int, 3>& cell_facets(int c) const { return cell_facets_[c]; }
  /// +1 when the global normal of local facet `i` points out of cell `c`.
  int facet_sign(int c, int i) const { return cell_facet_signs_[c][i]; }
  BoundaryTag facet_tag(int f) const { return tags_[f]; }
  bool is_boundary(int f) const { return facet_cells_[f][1] < 0; }

  Vec2 facet_normal(int f) const;
  double facet_length(int f) const;
  /// Point at parameter t in [0,1] along the facet, from low to high vertex.
  Vec2 facet_point(int f, double t) const;

  double cell_area(int c) const;
  double cell_diameter(int c) const;
  Vec2 cell_centroid(int c) const;
  /// Maximum cell diameter.
  double h() const { return h_; }
  double total_area() const;

  /// Affine map x = v0 + J * ref with J = [v1 - v0, v2 - v0].
  Mat2 jacobian(int c) const;
  Vec2 to_physical(int c, const Vec2& ref) const;
  Vec2 to_reference(int c, const Vec2& x) const;

  /// For meshes produced by refine_uniform: the coarse cell each cell came from.
  const std::vector<int>& parent_cells() const { return parents_; }

  /// Boundary facets in the form accepted by the constructor.
  std::vector<TaggedFacet> tagged_boundary() const;

 private:
  friend Mesh refine_uniform(const Mesh& coarse);

  std::vector<Vec2> vertices_;
  std::vector<std::array<int, 3>> cells_;
  std::vector<std::array<int, 2>> facets_;
  std::vector<std::array<int, 2>> facet_cells_;
  std::vector<std::array<int, 3>> cell_facets_;
  std::vector<std::array<int, 3>> cell_facet_signs_;
  std::vector<BoundaryTag> tags_;
  std::vector<int> parents_;
  double h_ = 0.0;
};

struct Rectangle {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;
};

enum class Split {
  Diagonal,  ///< each square cut along its lower-left to upper-right diagonal
  Crossed,   ///< each square cut into four triangles around its centre
};

/// Tag assigned to the boundary facets on each side of a rectangle.
struct SideTags {
  BoundaryTag left = BoundaryTag::GammaU;
  BoundaryTag right = BoundaryTag::GammaP;
  BoundaryTag bottom = BoundaryTag::GammaU;
  BoundaryTag top = BoundaryTag::GammaP;
};

/// nx-by-ny squares, each split into triangles. Throws std::invalid_argument
/// for a zero count or a degenerate rectangle.
Mesh structured_rectangle(int nx, int ny, const Rectangle& extent, const SideTags& tags,
                          Split split = Split::Diagonal);

/// Red refinement: every triangle becomes four similar children, boundary
/// tags pass to the child facets and parent_cells() records the ancestry.
Mesh refine_uniform(const Mesh& coarse);

/// ASCII mesh format:
///   forchheimer-mesh v1
///   vertices N      followed by N lines "x y"
///   cells M         followed by M lines "i j k"
///   boundary P      followed by P lines "i j TAG", TAG in {GAMMA_U, GAMMA_P}
/// Lines starting with '#' and blank lines are ignored.
Mesh read_mesh(std::istream& in);
Mesh load_mesh(const std::filesystem::path& path);
void write_mesh(const Mesh& mesh, std::ostream& out);
void save_mesh(const Mesh& mesh, const std::filesystem::path& path);

}  // namespace dfsolve
