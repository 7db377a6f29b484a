#pragma once

// JSON (de)serialization of meshes, tensors, tabulated families and
// reports. Complex numbers are [re, im] pairs; plain numbers are accepted as
// real values on input.

#include <string>
#include <vector>

#include "json.hpp"
#include "parsys/elliptic.hpp"
#include "parsys/extrapolation.hpp"
#include "parsys/geometry.hpp"
#include "parsys/tensors.hpp"

namespace parsys::io {

using json = nlohmann::json;

/// Throws InputError("unknown_key") if `obj` has a key outside `allowed`.
inline void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw InputError("invalid_config", where + ": expected an object");
  for (const auto& [k, v] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw InputError("unknown_key", where + ": unknown key '" + k + "'");
  }
}

inline Complex to_complex(const json& j, const std::string& where) {
  if (j.is_number()) return j.get<double>();
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
    return {j[0].get<double>(), j[1].get<double>()};
  throw InputError("invalid_config", where + ": expected a number or [re, im]");
}

inline json from_complex(Complex z) { return json::array({z.real(), z.imag()}); }

/// Finite double from a JSON value.
inline double number(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw InputError("missing_key", where + ": missing '" + key + "'");
  const json& v = obj.at(key);
  if (!v.is_number()) throw InputError("invalid_config", where + ": '" + key + "' must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw InputError("invalid_config", where + ": '" + key + "' must be finite");
  return x;
}

inline double number_or(const json& obj, const char* key, double fallback, const std::string& where) {
  return obj.contains(key) ? number(obj, key, where) : fallback;
}

inline int integer(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw InputError("missing_key", where + ": missing '" + key + "'");
  const json& v = obj.at(key);
  if (!v.is_number_integer()) throw InputError("invalid_config", where + ": '" + key + "' must be an integer");
  return v.get<int>();
}

inline int integer_or(const json& obj, const char* key, int fallback, const std::string& where) {
  return obj.contains(key) ? integer(obj, key, where) : fallback;
}

// ---- tensors ----

/// {"m", "d", "A": m x m x d x d, "b": m x m x d, "c": m x m x d, "dd": m x m};
/// every block except m and d is optional (zero).
inline CoefficientTensor tensor_from_json(const json& j) {
  check_keys(j, {"m", "d", "A", "b", "c", "dd"}, "tensor");
  const int m = integer(j, "m", "tensor");
  const int d = integer(j, "d", "tensor");
  if (m < 1 || d < 1 || m > 64 || d > 8) throw InputError("invalid_tensor", "tensor: m and d out of range");
  CoefficientTensor t(m, d);
  auto grid = [&](const char* key) -> const json& {
    const json& g = j.at(key);
    if (!g.is_array() || static_cast<int>(g.size()) != m)
      throw InputError("invalid_tensor", std::string("tensor: '") + key + "' must have m rows");
    for (const auto& row : g)
      if (!row.is_array() || static_cast<int>(row.size()) != m)
        throw InputError("invalid_tensor", std::string("tensor: '") + key + "' must be m x m");
    return g;
  };
  auto vec = [&](const json& v, const std::string& where) {
    if (!v.is_array() || static_cast<int>(v.size()) != d) throw InputError("invalid_tensor", where + " must have d entries");
    VectorC out(d);
    for (int k = 0; k < d; ++k) out(k) = to_complex(v[static_cast<size_t>(k)], where);
    return out;
  };
  if (j.contains("A")) {
    const json& g = grid("A");
    for (int i = 0; i < m; ++i)
      for (int jj = 0; jj < m; ++jj) {
        const json& a = g[static_cast<size_t>(i)][static_cast<size_t>(jj)];
        if (!a.is_array() || static_cast<int>(a.size()) != d) throw InputError("invalid_tensor", "tensor: A^{ij} must be d x d");
        MatrixC blk(d, d);
        for (int k = 0; k < d; ++k) blk.row(k) = vec(a[static_cast<size_t>(k)], "tensor: A row").transpose();
        t.set_A(i, jj, blk);
      }
  }
  if (j.contains("b")) {
    const json& g = grid("b");
    for (int i = 0; i < m; ++i)
      for (int jj = 0; jj < m; ++jj) t.set_b(i, jj, vec(g[static_cast<size_t>(i)][static_cast<size_t>(jj)], "tensor: b"));
  }
  if (j.contains("c")) {
    const json& g = grid("c");
    for (int i = 0; i < m; ++i)
      for (int jj = 0; jj < m; ++jj) t.set_c(i, jj, vec(g[static_cast<size_t>(i)][static_cast<size_t>(jj)], "tensor: c"));
  }
  if (j.contains("dd")) {
    const json& g = grid("dd");
    for (int i = 0; i < m; ++i)
      for (int jj = 0; jj < m; ++jj)
        t.set_dd(i, jj, to_complex(g[static_cast<size_t>(i)][static_cast<size_t>(jj)], "tensor: dd"));
  }
  if (!t.block().allFinite()) throw InputError("invalid_tensor", "tensor entries must be finite");
  return t;
}

inline json tensor_to_json(const CoefficientTensor& t) {
  const int m = t.m(), d = t.d();
  json a = json::array(), b = json::array(), c = json::array(), dd = json::array();
  for (int i = 0; i < m; ++i) {
    json ar = json::array(), br = json::array(), cr = json::array(), dr = json::array();
    for (int j = 0; j < m; ++j) {
      const MatrixC aij = t.A(i, j);
      json blk = json::array();
      for (int k = 0; k < d; ++k) {
        json row = json::array();
        for (int l = 0; l < d; ++l) row.push_back(from_complex(aij(k, l)));
        blk.push_back(row);
      }
      ar.push_back(blk);
      json bv = json::array(), cv = json::array();
      const VectorC bij = t.b(i, j), cij = t.c(i, j);
      for (int k = 0; k < d; ++k) {
        bv.push_back(from_complex(bij(k)));
        cv.push_back(from_complex(cij(k)));
      }
      br.push_back(bv);
      cr.push_back(cv);
      dr.push_back(from_complex(t.dd(i, j)));
    }
    a.push_back(ar);
    b.push_back(br);
    c.push_back(cr);
    dd.push_back(dr);
  }
  return {{"m", m}, {"d", d}, {"A", a}, {"b", b}, {"c", c}, {"dd", dd}};
}

/// Tabulated family: array of [t, tensor] pairs.
inline TensorFamily family_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw InputError("invalid_family", "family must be a non-empty array of [t, tensor]");
  std::vector<std::pair<double, CoefficientTensor>> table;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number())
      throw InputError("invalid_family", "family entries must be [t, tensor]");
    table.emplace_back(e[0].get<double>(), tensor_from_json(e[1]));
  }
  return TensorFamily::tabulated(std::move(table));
}

inline json family_to_json(const TensorFamily& f) {
  json out = json::array();
  for (const auto& [t, ten] : f.table()) out.push_back(json::array({t, tensor_to_json(ten)}));
  return out;
}

// ---- meshes ----

inline json mesh_to_json(const Mesh2D& mesh) {
  json v = json::array(), t = json::array(), e = json::array(), dp = json::array();
  for (const auto& p : mesh.vertices()) v.push_back(json::array({p[0], p[1]}));
  for (const auto& tri : mesh.triangles()) t.push_back(json::array({tri[0], tri[1], tri[2]}));
  for (const auto& be : mesh.boundary_edges()) e.push_back(json::array({be.a, be.b, be.label}));
  for (const auto& part : mesh.dirichlet_parts()) dp.push_back(part);
  return {{"vertices", v},
          {"triangles", t},
          {"boundary_edges", e},
          {"dirichlet_parts", dp},
          {"num_segments", mesh.num_segments()}};
}

inline Mesh2D mesh_from_json(const json& j) {
  check_keys(j, {"vertices", "triangles", "boundary_edges", "dirichlet_parts", "num_segments"}, "mesh");
  try {
    std::vector<Point2> v;
    for (const auto& p : j.at("vertices")) v.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    std::vector<std::array<int, 3>> t;
    for (const auto& tri : j.at("triangles")) t.push_back({tri.at(0).get<int>(), tri.at(1).get<int>(), tri.at(2).get<int>()});
    std::vector<BoundaryEdge> e;
    for (const auto& be : j.at("boundary_edges")) e.push_back({be.at(0).get<int>(), be.at(1).get<int>(), be.at(2).get<int>()});
    std::vector<std::vector<int>> dp = j.at("dirichlet_parts").get<std::vector<std::vector<int>>>();
    int segs = 0;
    for (const auto& be : e) segs = std::max(segs, be.label + 1);
    segs = j.value("num_segments", segs);
    return Mesh2D(std::move(v), std::move(t), std::move(e), std::move(dp), segs);
  } catch (const json::exception& ex) {
    throw InputError("invalid_mesh", std::string("mesh: ") + ex.what());
  }
}

// ---- reports ----

inline json window_to_json(const SneibergWindow& w) {
  return {{"theta", w.theta_center}, {"radius", w.radius},   {"inverse_bound", w.inverse_bound},
          {"beta", w.beta},          {"gamma", w.gamma_op},  {"lower", w.lower},
          {"upper", w.upper}};
}

inline json estimate_to_json(const ExtrapolationEstimate& e) {
  json prov = json::array();
  for (const auto& p : e.provenance)
    prov.push_back({{"stage", p.stage}, {"axis", p.axis}, {"anchor", p.anchor}, {"window", window_to_json(p.window)}});
  json out = {{"I_t", {e.I_t.lo, e.I_t.hi}},
              {"I_x", {e.I_x.lo, e.I_x.hi}},
              {"inputs", {{"lambda", e.lambda}, {"gamma", e.gamma}, {"M", e.M}, {"Lambda", e.Lambda}}},
              {"beta0", e.beta0},
              {"gamma0", e.gamma0},
              {"provenance", prov},
              {"label", "estimate"}};
  if (e.delta) out["delta"] = *e.delta;
  return out;
}

}  // namespace parsys::io
