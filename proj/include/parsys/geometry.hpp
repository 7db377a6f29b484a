#pragma once

// 2-D triangulations of rectilinear polygons with per-component Dirichlet
// boundary parts, plus sampled checks of the boundary regularity (Ahlfors
// ratio) and measure density of the domain.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "parsys/core.hpp"

namespace parsys {

using Point2 = std::array<double, 2>;

struct BoundaryEdge {
  int a = 0;
  int b = 0;
  int label = 0;  // boundary segment the edge belongs to
};

/// Axis-aligned slit cut into the domain. `start` must lie on the polygon
/// boundary and `end` strictly inside.
struct Slit {
  Point2 start{};
  Point2 end{};
};

/// Rectilinear polygon, optionally with a slit. Boundary segment labels are
/// the polygon edge indices 0..n-1 (edge k joins vertex k and k+1); a slit
/// adds labels n (lower/left side) and n+1 (upper/right side).
struct DomainSpec {
  std::vector<Point2> polygon;
  std::optional<Slit> slit;

  int num_segments() const { return static_cast<int>(polygon.size()) + (slit ? 2 : 0); }

  static DomainSpec rectangle(double x0, double y0, double x1, double y1) {
    return {{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}, std::nullopt};
  }
  static DomainSpec unit_square() { return rectangle(0, 0, 1, 1); }
  /// [0,2]^2 minus [1,2]^2. Segment 0 is the bottom edge.
  static DomainSpec l_shape() { return {{{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}}, std::nullopt}; }
};

/// Per component, the boundary segment labels carrying Dirichlet conditions.
struct BoundarySpec {
  std::vector<std::vector<int>> dirichlet_segments;

  int num_components() const { return static_cast<int>(dirichlet_segments.size()); }

  static BoundarySpec full_dirichlet(const DomainSpec& dom, int m) {
    std::vector<int> all(static_cast<size_t>(dom.num_segments()));
    for (int k = 0; k < dom.num_segments(); ++k) all[static_cast<size_t>(k)] = k;
    return {std::vector<std::vector<int>>(static_cast<size_t>(m), all)};
  }
  static BoundarySpec pure_neumann(int m) { return {std::vector<std::vector<int>>(static_cast<size_t>(m))}; }
};

struct CellLocation {
  int cell = -1;
  std::array<double, 3> bary{};
};

class Mesh2D {
 public:
  Mesh2D() = default;

  /// Takes ownership of the raw arrays and validates every invariant.
  Mesh2D(std::vector<Point2> vertices, std::vector<std::array<int, 3>> triangles,
         std::vector<BoundaryEdge> boundary_edges, std::vector<std::vector<int>> dirichlet_parts,
         int num_segments)
      : vertices_(std::move(vertices)),
        triangles_(std::move(triangles)),
        boundary_edges_(std::move(boundary_edges)),
        dirichlet_parts_(std::move(dirichlet_parts)),
        num_segments_(num_segments) {
    validate();
    build_dirichlet_flags();
  }

  const std::vector<Point2>& vertices() const { return vertices_; }
  const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
  const std::vector<BoundaryEdge>& boundary_edges() const { return boundary_edges_; }
  const std::vector<std::vector<int>>& dirichlet_parts() const { return dirichlet_parts_; }
  int num_components() const { return static_cast<int>(dirichlet_parts_.size()); }
  int num_segments() const { return num_segments_; }
  int num_vertices() const { return static_cast<int>(vertices_.size()); }
  int num_triangles() const { return static_cast<int>(triangles_.size()); }

  /// True when vertex v lies on an edge of D_i.
  bool is_dirichlet_vertex(int component, int v) const {
    return dirichlet_vertex_[static_cast<size_t>(component)][static_cast<size_t>(v)];
  }
  bool has_dirichlet(int component) const { return !dirichlet_parts_[static_cast<size_t>(component)].empty(); }

  double signed_area(int t) const {
    const auto& tri = triangles_[static_cast<size_t>(t)];
    const auto& p = vertices_[static_cast<size_t>(tri[0])];
    const auto& q = vertices_[static_cast<size_t>(tri[1])];
    const auto& r = vertices_[static_cast<size_t>(tri[2])];
    return 0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]));
  }

  double area() const {
    double s = 0.0;
    for (int t = 0; t < num_triangles(); ++t) s += signed_area(t);
    return s;
  }

  double max_edge_length() const {
    double h = 0.0;
    for (const auto& tri : triangles_)
      for (int k = 0; k < 3; ++k) h = std::max(h, distance(tri[static_cast<size_t>(k)], tri[static_cast<size_t>((k + 1) % 3)]));
    return h;
  }

  double edge_length(const BoundaryEdge& e) const { return distance(e.a, e.b); }

  /// Brute-force point location; points on shared edges resolve to the
  /// first matching triangle.
  std::optional<CellLocation> locate(const Point2& x, double tol = 1e-12) const {
    for (int t = 0; t < num_triangles(); ++t) {
      const auto bary = barycentric(t, x);
      if (bary[0] >= -tol && bary[1] >= -tol && bary[2] >= -tol) return CellLocation{t, bary};
    }
    return std::nullopt;
  }

  std::array<double, 3> barycentric(int t, const Point2& x) const {
    const auto& tri = triangles_[static_cast<size_t>(t)];
    const auto& p = vertices_[static_cast<size_t>(tri[0])];
    const auto& q = vertices_[static_cast<size_t>(tri[1])];
    const auto& r = vertices_[static_cast<size_t>(tri[2])];
    const double det = (q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]);
    const double l1 = ((x[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (x[1] - p[1])) / det;
    const double l2 = ((q[0] - p[0]) * (x[1] - p[1]) - (x[0] - p[0]) * (q[1] - p[1])) / det;
    return {1.0 - l1 - l2, l1, l2};
  }

 private:
  double distance(int a, int b) const {
    const auto& p = vertices_[static_cast<size_t>(a)];
    const auto& q = vertices_[static_cast<size_t>(b)];
    return std::hypot(q[0] - p[0], q[1] - p[1]);
  }

  void validate() const {
    const int nv = num_vertices();
    auto bad = [](const std::string& what) { throw InputError("invalid_mesh", "Mesh2D: " + what); };
    if (triangles_.empty()) bad("no triangles");
    for (int t = 0; t < num_triangles(); ++t) {
      for (int v : triangles_[static_cast<size_t>(t)])
        if (v < 0 || v >= nv) bad("triangle vertex index out of range");
      if (!(signed_area(t) > 0.0)) bad("triangle " + std::to_string(t) + " has nonpositive signed area");
    }
    std::map<std::pair<int, int>, int> edge_count;
    for (const auto& tri : triangles_)
      for (int k = 0; k < 3; ++k) {
        int a = tri[static_cast<size_t>(k)], b = tri[static_cast<size_t>((k + 1) % 3)];
        if (a > b) std::swap(a, b);
        ++edge_count[{a, b}];
      }
    std::set<std::pair<int, int>> topo_boundary;
    for (const auto& [e, c] : edge_count) {
      if (c > 2) bad("edge shared by more than two triangles");
      if (c == 1) topo_boundary.insert(e);
    }
    std::set<std::pair<int, int>> listed;
    for (const auto& be : boundary_edges_) {
      if (be.a < 0 || be.a >= nv || be.b < 0 || be.b >= nv) bad("boundary edge index out of range");
      if (be.label < 0 || be.label >= num_segments_) bad("boundary edge label out of range");
      listed.insert({std::min(be.a, be.b), std::max(be.a, be.b)});
    }
    if (listed != topo_boundary || listed.size() != boundary_edges_.size())
      bad("boundary_edges do not match the topological boundary");
    for (const auto& part : dirichlet_parts_)
      for (int e : part)
        if (e < 0 || e >= static_cast<int>(boundary_edges_.size())) bad("Dirichlet edge index out of range");

    // Hanging nodes: no vertex may sit in the relative interior of an edge.
    std::vector<int> order(static_cast<size_t>(nv));
    for (int i = 0; i < nv; ++i) order[static_cast<size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](int i, int j) {
      return vertices_[static_cast<size_t>(i)][0] < vertices_[static_cast<size_t>(j)][0];
    });
    for (const auto& [e, c] : edge_count) {
      const auto& p = vertices_[static_cast<size_t>(e.first)];
      const auto& q = vertices_[static_cast<size_t>(e.second)];
      const double xlo = std::min(p[0], q[0]) - 1e-12, xhi = std::max(p[0], q[0]) + 1e-12;
      auto it = std::lower_bound(order.begin(), order.end(), xlo, [&](int i, double x) {
        return vertices_[static_cast<size_t>(i)][0] < x;
      });
      const double len = std::hypot(q[0] - p[0], q[1] - p[1]);
      for (; it != order.end() && vertices_[static_cast<size_t>(*it)][0] <= xhi; ++it) {
        const int v = *it;
        if (v == e.first || v == e.second) continue;
        const auto& x = vertices_[static_cast<size_t>(v)];
        const double cross = (q[0] - p[0]) * (x[1] - p[1]) - (q[1] - p[1]) * (x[0] - p[0]);
        if (std::abs(cross) > 1e-12 * len) continue;
        const double s = ((x[0] - p[0]) * (q[0] - p[0]) + (x[1] - p[1]) * (q[1] - p[1])) / (len * len);
        if (s > 1e-12 && s < 1 - 1e-12) bad("hanging node " + std::to_string(v));
      }
    }
  }

  void build_dirichlet_flags() {
    dirichlet_vertex_.assign(dirichlet_parts_.size(), std::vector<bool>(vertices_.size(), false));
    for (size_t i = 0; i < dirichlet_parts_.size(); ++i)
      for (int e : dirichlet_parts_[i]) {
        dirichlet_vertex_[i][static_cast<size_t>(boundary_edges_[static_cast<size_t>(e)].a)] = true;
        dirichlet_vertex_[i][static_cast<size_t>(boundary_edges_[static_cast<size_t>(e)].b)] = true;
      }
  }

  std::vector<Point2> vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<BoundaryEdge> boundary_edges_;
  std::vector<std::vector<int>> dirichlet_parts_;
  int num_segments_ = 0;
  std::vector<std::vector<bool>> dirichlet_vertex_;
};

namespace detail {

inline double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

inline bool on_segment(const Point2& p, const Point2& a, const Point2& b, double tol = 1e-12) {
  if (std::abs(cross(a, b, p)) > tol * std::max(1.0, std::hypot(b[0] - a[0], b[1] - a[1]))) return false;
  return p[0] >= std::min(a[0], b[0]) - tol && p[0] <= std::max(a[0], b[0]) + tol &&
         p[1] >= std::min(a[1], b[1]) - tol && p[1] <= std::max(a[1], b[1]) + tol;
}

inline bool segments_intersect(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
  const double d1 = cross(c, d, a), d2 = cross(c, d, b), d3 = cross(a, b, c), d4 = cross(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
  return on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b);
}

inline double polygon_signed_area(const std::vector<Point2>& poly) {
  double s = 0.0;
  for (size_t k = 0; k < poly.size(); ++k) {
    const auto& p = poly[k];
    const auto& q = poly[(k + 1) % poly.size()];
    s += p[0] * q[1] - q[0] * p[1];
  }
  return 0.5 * s;
}

inline bool point_in_polygon(const std::vector<Point2>& poly, const Point2& x) {
  bool inside = false;
  for (size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a[1] > x[1]) != (b[1] > x[1]) && x[0] < (b[0] - a[0]) * (x[1] - a[1]) / (b[1] - a[1]) + a[0])
      inside = !inside;
  }
  return inside;
}

inline bool on_polygon_boundary(const std::vector<Point2>& poly, const Point2& x) {
  for (size_t k = 0; k < poly.size(); ++k)
    if (on_segment(x, poly[k], poly[(k + 1) % poly.size()])) return true;
  return false;
}

inline void validate_polygon(const std::vector<Point2>& poly) {
  const size_t n = poly.size();
  if (n < 4) throw InputError("non_simple_polygon", "polygon needs at least 4 vertices");
  for (size_t k = 0; k < n; ++k) {
    const auto& p = poly[k];
    const auto& q = poly[(k + 1) % n];
    if (p == q) throw InputError("non_simple_polygon", "polygon has a zero-length edge");
    if (p[0] != q[0] && p[1] != q[1])
      throw InputError("non_rectilinear_polygon", "polygon edges must be axis-aligned");
  }
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      const auto &a = poly[i], &b = poly[(i + 1) % n], &c = poly[j], &d = poly[(j + 1) % n];
      if (adjacent) {
        // Adjacent edges may only share their common vertex: reject folds.
        const Point2& far_i = (j == i + 1) ? a : b;
        const Point2& far_j = (j == i + 1) ? d : c;
        if (on_segment(far_j, a, b) || on_segment(far_i, c, d))
          throw InputError("non_simple_polygon", "polygon folds back on itself");
      } else if (segments_intersect(a, b, c, d)) {
        throw InputError("non_simple_polygon", "polygon edges " + std::to_string(i) + " and " +
                                                   std::to_string(j) + " intersect");
      }
    }
  if (std::abs(polygon_signed_area(poly)) <= 0.0) throw InputError("empty_domain", "polygon has zero area");
}

/// Sorted breakpoints refined so that consecutive gaps are at most h.
inline std::vector<double> refine_breakpoints(std::vector<double> pts, double h) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  std::vector<double> out;
  for (size_t k = 0; k + 1 < pts.size(); ++k) {
    const double gap = pts[k + 1] - pts[k];
    const int pieces = std::max(1, static_cast<int>(std::ceil(gap / h - 1e-12)));
    for (int s = 0; s < pieces; ++s) out.push_back(pts[k] + gap * s / pieces);
  }
  out.push_back(pts.back());
  return out;
}

/// Signed area of the intersection of the disk of radius r centred at the
/// origin with the triangle (0, a, b).
inline double origin_triangle_disk_area(Point2 a, Point2 b, double r) {
  const double r2 = r * r;
  auto len2 = [](const Point2& p) { return p[0] * p[0] + p[1] * p[1]; };
  auto sector = [&](const Point2& p, const Point2& q) {
    const double cr = p[0] * q[1] - p[1] * q[0];
    const double dt = p[0] * q[0] + p[1] * q[1];
    return 0.5 * r2 * std::atan2(cr, dt);
  };
  auto tri = [](const Point2& p, const Point2& q) { return 0.5 * (p[0] * q[1] - p[1] * q[0]); };

  // Intersections of a + s(b-a), s in (0,1), with the circle.
  const Point2 d{b[0] - a[0], b[1] - a[1]};
  const double A = len2(d);
  if (A == 0.0) return 0.0;
  const double B = a[0] * d[0] + a[1] * d[1];
  const double C = len2(a) - r2;
  const double disc = B * B - A * C;
  std::vector<double> cuts{0.0};
  if (disc > 0) {
    const double sq = std::sqrt(disc);
    const double s1 = (-B - sq) / A, s2 = (-B + sq) / A;
    if (s1 > 0 && s1 < 1) cuts.push_back(s1);
    if (s2 > 0 && s2 < 1) cuts.push_back(s2);
  }
  cuts.push_back(1.0);
  double area = 0.0;
  for (size_t k = 0; k + 1 < cuts.size(); ++k) {
    const Point2 p{a[0] + cuts[k] * d[0], a[1] + cuts[k] * d[1]};
    const Point2 q{a[0] + cuts[k + 1] * d[0], a[1] + cuts[k + 1] * d[1]};
    const double sm = 0.5 * (cuts[k] + cuts[k + 1]);
    const Point2 mid{a[0] + sm * d[0], a[1] + sm * d[1]};
    area += (len2(mid) <= r2) ? tri(p, q) : sector(p, q);
  }
  return area;
}

/// Length of the part of segment [a,b] inside the closed disk B(x,r).
inline double segment_disk_length(const Point2& a, const Point2& b, const Point2& x, double r) {
  const Point2 p{a[0] - x[0], a[1] - x[1]};
  const Point2 d{b[0] - a[0], b[1] - a[1]};
  const double A = d[0] * d[0] + d[1] * d[1];
  if (A == 0.0) return 0.0;
  const double B = p[0] * d[0] + p[1] * d[1];
  const double C = p[0] * p[0] + p[1] * p[1] - r * r;
  const double disc = B * B - A * C;
  if (disc <= 0) return 0.0;
  const double sq = std::sqrt(disc);
  const double s1 = std::max(0.0, (-B - sq) / A), s2 = std::min(1.0, (-B + sq) / A);
  return s2 > s1 ? (s2 - s1) * std::sqrt(A) : 0.0;
}

}  // namespace detail

/// Structured triangulation of a rectilinear polygon: the bounding grid
/// through all polygon (and slit) coordinates is refined to spacing <= h,
/// cells inside the polygon are kept and split along their SW-NE diagonal.
inline Mesh2D build_mesh(const DomainSpec& dom, double h, const BoundarySpec& bc) {
  if (!(h > 0.0) || !std::isfinite(h)) throw InputError("invalid_h", "build_mesh: h must be positive");
  detail::validate_polygon(dom.polygon);
  if (bc.num_components() < 1) throw InputError("invalid_bc", "build_mesh: need at least one component");
  const int nseg = dom.num_segments();
  for (const auto& comp : bc.dirichlet_segments)
    for (int s : comp)
      if (s < 0 || s >= nseg)
        throw InputError("unknown_boundary_segment",
                         "build_mesh: boundary label " + std::to_string(s) + " references no segment");

  std::vector<double> xs, ys;
  for (const auto& p : dom.polygon) {
    xs.push_back(p[0]);
    ys.push_back(p[1]);
  }
  bool slit_horizontal = false;
  if (dom.slit) {
    const auto& sl = *dom.slit;
    if (sl.start[0] != sl.end[0] && sl.start[1] != sl.end[1])
      throw InputError("invalid_slit", "slit must be axis-aligned");
    if (sl.start == sl.end) throw InputError("invalid_slit", "slit has zero length");
    if (!detail::on_polygon_boundary(dom.polygon, sl.start))
      throw InputError("invalid_slit", "slit must start on the polygon boundary");
    if (detail::on_polygon_boundary(dom.polygon, sl.end) || !detail::point_in_polygon(dom.polygon, sl.end))
      throw InputError("invalid_slit", "slit must end strictly inside the polygon");
    const Point2 mid{0.5 * (sl.start[0] + sl.end[0]), 0.5 * (sl.start[1] + sl.end[1])};
    if (!detail::point_in_polygon(dom.polygon, mid)) throw InputError("invalid_slit", "slit leaves the polygon");
    slit_horizontal = sl.start[1] == sl.end[1];
    xs.push_back(sl.start[0]);
    xs.push_back(sl.end[0]);
    ys.push_back(sl.start[1]);
    ys.push_back(sl.end[1]);
  }
  xs = detail::refine_breakpoints(xs, h);
  ys = detail::refine_breakpoints(ys, h);
  const int nx = static_cast<int>(xs.size()), ny = static_cast<int>(ys.size());

  std::vector<int> node_id(static_cast<size_t>(nx * ny), -1);
  std::vector<Point2> verts;
  auto node = [&](int ix, int iy) {
    int& id = node_id[static_cast<size_t>(iy * nx + ix)];
    if (id < 0) {
      id = static_cast<int>(verts.size());
      verts.push_back({xs[static_cast<size_t>(ix)], ys[static_cast<size_t>(iy)]});
    }
    return id;
  };

  // Slit nodes (all grid nodes on the slit except the interior tip) get a
  // duplicate used by cells on the upper/right side.
  std::map<std::pair<int, int>, int> duplicate;
  auto on_slit_node = [&](int ix, int iy) {
    if (!dom.slit) return false;
    const Point2 p{xs[static_cast<size_t>(ix)], ys[static_cast<size_t>(iy)]};
    return detail::on_segment(p, dom.slit->start, dom.slit->end) && p != dom.slit->end;
  };
  auto node_for_cell = [&](int ix, int iy, int cx, int cy) {
    if (on_slit_node(ix, iy)) {
      const bool upper_side = slit_horizontal ? (cy == iy) : (cx == ix);
      if (upper_side) {
        auto it = duplicate.find({ix, iy});
        if (it != duplicate.end()) return it->second;
        const int id = static_cast<int>(verts.size());
        verts.push_back({xs[static_cast<size_t>(ix)], ys[static_cast<size_t>(iy)]});
        duplicate[{ix, iy}] = id;
        return id;
      }
    }
    return node(ix, iy);
  };

  std::vector<std::array<int, 3>> tris;
  for (int cy = 0; cy + 1 < ny; ++cy)
    for (int cx = 0; cx + 1 < nx; ++cx) {
      const Point2 c{0.5 * (xs[static_cast<size_t>(cx)] + xs[static_cast<size_t>(cx + 1)]),
                     0.5 * (ys[static_cast<size_t>(cy)] + ys[static_cast<size_t>(cy + 1)])};
      if (!detail::point_in_polygon(dom.polygon, c)) continue;
      const int n00 = node_for_cell(cx, cy, cx, cy);
      const int n10 = node_for_cell(cx + 1, cy, cx, cy);
      const int n11 = node_for_cell(cx + 1, cy + 1, cx, cy);
      const int n01 = node_for_cell(cx, cy + 1, cx, cy);
      tris.push_back({n00, n10, n11});
      tris.push_back({n00, n11, n01});
    }
  if (tris.empty()) throw InputError("empty_domain", "build_mesh: no cells inside the polygon");

  std::set<int> dup_ids;
  for (const auto& [key, id] : duplicate) dup_ids.insert(id);

  std::map<std::pair<int, int>, std::pair<int, int>> oriented;
  std::map<std::pair<int, int>, int> count;
  for (const auto& tri : tris)
    for (int k = 0; k < 3; ++k) {
      const int a = tri[static_cast<size_t>(k)], b = tri[static_cast<size_t>((k + 1) % 3)];
      const std::pair<int, int> key{std::min(a, b), std::max(a, b)};
      ++count[key];
      oriented[key] = {a, b};
    }
  std::vector<BoundaryEdge> bedges;
  const int npoly = static_cast<int>(dom.polygon.size());
  for (const auto& [key, c] : count) {
    if (c != 1) continue;
    const auto [a, b] = oriented[key];
    const auto& pa = verts[static_cast<size_t>(a)];
    const auto& pb = verts[static_cast<size_t>(b)];
    int label = -1;
    if (dom.slit && detail::on_segment(pa, dom.slit->start, dom.slit->end) &&
        detail::on_segment(pb, dom.slit->start, dom.slit->end) && !detail::on_polygon_boundary(dom.polygon, {0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])})) {
      label = (dup_ids.count(a) || dup_ids.count(b)) ? npoly + 1 : npoly;
    } else {
      for (int s = 0; s < npoly; ++s) {
        const auto& p = dom.polygon[static_cast<size_t>(s)];
        const auto& q = dom.polygon[static_cast<size_t>((s + 1) % npoly)];
        if (detail::on_segment(pa, p, q) && detail::on_segment(pb, p, q)) {
          label = s;
          break;
        }
      }
    }
    if (label < 0) throw SolverError("mesh_generation", "build_mesh: boundary edge not on any segment");
    bedges.push_back({a, b, label});
  }

  std::vector<std::vector<int>> parts(static_cast<size_t>(bc.num_components()));
  for (size_t i = 0; i < parts.size(); ++i) {
    const std::set<int> labels(bc.dirichlet_segments[i].begin(), bc.dirichlet_segments[i].end());
    for (size_t e = 0; e < bedges.size(); ++e)
      if (labels.count(bedges[e].label)) parts[i].push_back(static_cast<int>(e));
  }
  return Mesh2D(std::move(verts), std::move(tris), std::move(bedges), std::move(parts), nseg);
}

/// Convenience: the unit square with n x n cells (h = 1/n).
inline Mesh2D unit_square_mesh(int n, const BoundarySpec& bc) {
  return build_mesh(DomainSpec::unit_square(), 1.0 / n, bc);
}

/// H_1(D_i ∩ B(x,r)) / r, with D_i the union of the Dirichlet edges of
/// component i.
inline double ahlfors_ratio(const Mesh2D& mesh, int component, const Point2& x, double r) {
  double len = 0.0;
  for (int e : mesh.dirichlet_parts()[static_cast<size_t>(component)]) {
    const auto& be = mesh.boundary_edges()[static_cast<size_t>(e)];
    len += detail::segment_disk_length(mesh.vertices()[static_cast<size_t>(be.a)],
                                       mesh.vertices()[static_cast<size_t>(be.b)], x, r);
  }
  return len / r;
}

/// |Ω ∩ B(x,r)| / r^2 from exact triangle/disk intersection areas.
inline double density_ratio(const Mesh2D& mesh, const Point2& x, double r) {
  double area = 0.0;
  for (const auto& tri : mesh.triangles()) {
    Point2 p[3];
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (int k = 0; k < 3; ++k) {
      const auto& v = mesh.vertices()[static_cast<size_t>(tri[static_cast<size_t>(k)])];
      p[k] = {v[0] - x[0], v[1] - x[1]};
      xmin = std::min(xmin, p[k][0]);
      xmax = std::max(xmax, p[k][0]);
      ymin = std::min(ymin, p[k][1]);
      ymax = std::max(ymax, p[k][1]);
    }
    if (xmin > r || xmax < -r || ymin > r || ymax < -r) continue;
    for (int k = 0; k < 3; ++k) area += detail::origin_triangle_disk_area(p[k], p[(k + 1) % 3], r);
  }
  return area / (r * r);
}

struct RatioRange {
  bool applicable = false;
  double min = 0.0;
  double max = 0.0;
};

struct GeometryReport {
  std::vector<RatioRange> ahlfors;  // one entry per component
  RatioRange density;
  int sample_count = 0;
  std::vector<std::string> warnings;
};

/// Samples `samples` points per Dirichlet part (equally spaced in arc length)
/// for the Ahlfors ratios, and up to `samples` mesh vertices for the density
/// ratio, at every radius. The bi-Lipschitz chart condition on the Neumann
/// part has no discrete certificate and is not checked.
inline GeometryReport check_geometry(const Mesh2D& mesh, const std::vector<double>& radii, int samples) {
  if (radii.empty()) throw InputError("invalid_radii", "check_geometry: radii must be nonempty");
  for (double r : radii)
    if (!(r > 0.0 && r < 1.0)) throw InputError("invalid_radii", "check_geometry: radii must lie in (0,1)");
  if (samples < 1) throw InputError("invalid_samples", "check_geometry: samples must be positive");

  GeometryReport rep;
  auto widen = [](RatioRange& rr, double v) {
    if (!rr.applicable) {
      rr = {true, v, v};
    } else {
      rr.min = std::min(rr.min, v);
      rr.max = std::max(rr.max, v);
    }
  };

  for (int i = 0; i < mesh.num_components(); ++i) {
    RatioRange rr;
    const auto& part = mesh.dirichlet_parts()[static_cast<size_t>(i)];
    double total = 0.0;
    for (int e : part) total += mesh.edge_length(mesh.boundary_edges()[static_cast<size_t>(e)]);
    if (!part.empty() && total > 0) {
      for (int k = 0; k < samples; ++k) {
        double target = (k + 0.5) / samples * total;
        for (int e : part) {
          const auto& be = mesh.boundary_edges()[static_cast<size_t>(e)];
          const double len = mesh.edge_length(be);
          if (target <= len) {
            const auto& a = mesh.vertices()[static_cast<size_t>(be.a)];
            const auto& b = mesh.vertices()[static_cast<size_t>(be.b)];
            const double s = target / len;
            const Point2 x{a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])};
            for (double r : radii) widen(rr, ahlfors_ratio(mesh, i, x, r));
            ++rep.sample_count;
            break;
          }
          target -= len;
        }
      }
    }
    if (rr.applicable && (!std::isfinite(rr.min) || rr.min < 0.25))
      rep.warnings.push_back("Ahlfors ratio of D_" + std::to_string(i + 1) + " drops below 0.25");
    rep.ahlfors.push_back(rr);
  }

  const int nv = mesh.num_vertices();
  const int stride = std::max(1, nv / samples);
  for (int v = 0; v < nv; v += stride) {
    for (double r : radii) widen(rep.density, density_ratio(mesh, mesh.vertices()[static_cast<size_t>(v)], r));
    ++rep.sample_count;
  }
  if (rep.density.applicable && rep.density.min < 0.1)
    rep.warnings.push_back("measure density ratio drops below 0.1");
  return rep;
}

}  // namespace parsys
