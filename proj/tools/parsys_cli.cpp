// parsys command line front end.
//
//   parsys_cli <command> --config <path> [--out <dir>] [--seed <n>]
//
// Exit codes: 0 success, 2 invalid input (nothing written), 3 solver failure
// (diagnostic.json written to the output directory).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "parsys/chemotaxis.hpp"
#include "parsys/extrapolation.hpp"
#include "parsys/json_io.hpp"
#include "parsys/random_tensors.hpp"
#include "parsys/sawtooth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace parsys;
using io::check_keys;
using io::integer_or;
using io::number;
using io::number_or;

namespace {

/// Files are buffered and only written once the command has succeeded (or
/// failed inside a solver), so validation errors leave no artifacts.
struct Artifacts {
  std::vector<std::pair<std::string, std::string>> files;
  void add(const std::string& name, const std::string& content) { files.emplace_back(name, content); }
  void add_json(const std::string& name, const json& j) { add(name, j.dump(2) + "\n"); }
  void write(const fs::path& dir) const {
    fs::create_directories(dir);
    for (const auto& [name, content] : files) {
      std::ofstream os(dir / name, std::ios::binary);
      if (!os) throw InputError("io_error", "cannot write " + (dir / name).string());
      os << content;
    }
  }
};

struct Context {
  json params;
  std::uint64_t seed = 0;
  Artifacts out;
};

// ---- shared config pieces ----

DomainSpec domain_from_json(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "unit_square") return DomainSpec::unit_square();
    if (s == "l_shape") return DomainSpec::l_shape();
    throw InputError("invalid_config", "domain: unknown name '" + s + "'");
  }
  check_keys(j, {"polygon", "slit"}, "domain");
  DomainSpec d;
  for (const auto& p : j.at("polygon")) {
    if (!p.is_array() || p.size() != 2) throw InputError("invalid_config", "domain: polygon points are [x, y]");
    d.polygon.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  if (j.contains("slit")) {
    const json& s = j.at("slit");
    check_keys(s, {"start", "end"}, "slit");
    d.slit = Slit{{s.at("start").at(0).get<double>(), s.at("start").at(1).get<double>()},
                  {s.at("end").at(0).get<double>(), s.at("end").at(1).get<double>()}};
  }
  return d;
}

/// {"domain": name | polygon, "h" | "n", "boundary": "dirichlet" | "neumann" | [[segments], ...]}
Mesh2D mesh_from_config(const json& j, int m) {
  check_keys(j, {"domain", "h", "n", "boundary"}, "mesh");
  const DomainSpec dom = domain_from_json(j.value("domain", json("unit_square")));
  double h = 0.0;
  if (j.contains("n")) {
    const int n = io::integer(j, "n", "mesh");
    if (n < 1 || n > 512) throw InputError("invalid_config", "mesh: n must lie in [1, 512]");
    h = 1.0 / n;
  } else {
    h = number(j, "h", "mesh");
  }
  BoundarySpec bc = BoundarySpec::full_dirichlet(dom, m);
  if (j.contains("boundary")) {
    const json& b = j.at("boundary");
    if (b.is_string() && b.get<std::string>() == "neumann") {
      bc = BoundarySpec::pure_neumann(m);
    } else if (b.is_string() && b.get<std::string>() == "dirichlet") {
    } else if (b.is_array()) {
      if (static_cast<int>(b.size()) != m) throw InputError("invalid_config", "mesh: boundary needs one list per component");
      bc.dirichlet_segments = b.get<std::vector<std::vector<int>>>();
    } else {
      throw InputError("invalid_config", "mesh: boundary must be 'dirichlet', 'neumann' or a list");
    }
  }
  return build_mesh(dom, h, bc);
}

Complex complex_param(const json& j, const char* key, Complex fallback) {
  return j.contains(key) ? io::to_complex(j.at(key), key) : fallback;
}

TimeGrid grid_from(const json& j) {
  return TimeGrid(number_or(j, "t0", 0.0, "time"), number_or(j, "T", 1.0, "time"), integer_or(j, "N", 16, "time"));
}

std::string trajectory_csv(const FESpace& sp, const Trajectory& u) {
  // Nodal values per component: t, then component-major vertex values.
  std::ostringstream os;
  os << std::setprecision(17) << "t";
  const int nv = sp.mesh().num_vertices();
  for (int c = 0; c < sp.num_components(); ++c)
    for (int v = 0; v < nv; ++v) os << ",u" << c << "_" << v;
  os << '\n';
  for (int n = 0; n <= u.grid.N; ++n) {
    os << u.grid.node(n);
    for (int c = 0; c < sp.num_components(); ++c)
      for (int v = 0; v < nv; ++v) {
        const int k = sp.dof(c, v);
        os << ',' << (k >= 0 ? u.values[static_cast<size_t>(n)](k).real() : 0.0);
      }
    os << '\n';
  }
  return os.str();
}

json window_json(const SneibergWindow& w) { return io::window_to_json(w); }

// ---- commands ----

void cmd_sneiberg(Context& ctx) {
  const json& p = ctx.params;
  check_keys(p, {"theta", "beta", "gamma", "intervals"}, "sneiberg");
  json rep = json::object();
  if (p.contains("theta") || p.contains("beta") || p.contains("gamma")) {
    const auto w = sneiberg_window(number(p, "theta", "sneiberg"), number(p, "beta", "sneiberg"),
                                   number(p, "gamma", "sneiberg"));
    rep = window_json(w);
  }
  if (p.contains("intervals")) {
    const json& q = p.at("intervals");
    check_keys(q, {"lambda", "gamma", "M", "Lambda", "delta"}, "intervals");
    std::optional<double> delta;
    if (q.contains("delta")) delta = number(q, "delta", "intervals");
    const auto e = estimate_intervals(number(q, "lambda", "intervals"), number(q, "gamma", "intervals"),
                                      number(q, "M", "intervals"), number(q, "Lambda", "intervals"), delta);
    rep["intervals"] = io::estimate_to_json(e);
  }
  if (rep.empty()) throw InputError("missing_key", "sneiberg: give theta/beta/gamma or intervals");
  ctx.out.add_json("report.json", rep);
}

void cmd_analyze_tensor(Context& ctx) {
  const json& p = ctx.params;
  check_keys(p, {"tensor", "eta_grid_size", "garding"}, "analyze-tensor");
  if (!p.contains("tensor")) throw InputError("missing_key", "analyze-tensor: missing 'tensor'");
  const CoefficientTensor t = io::tensor_from_json(p.at("tensor"));
  const int grid = integer_or(p, "eta_grid_size", 720, "analyze-tensor");
  json rep;
  rep["gamma_legendre"] = legendre_constant(t);
  rep["gamma_lh"] = legendre_hadamard_constant(t, {}, grid);
  rep["M"] = tensor_norm(t);
  rep["flags"] = {{"legendre_ok", rep["gamma_legendre"].get<double>() > 0},
                  {"lh_ok", rep["gamma_lh"].get<double>() > 0}};
  if (p.contains("garding")) {
    const json& g = p.at("garding");
    check_keys(g, {"mesh", "lambda"}, "garding");
    if (t.d() != 2) throw InputError("dimension_mismatch", "garding needs d = 2");
    const double lambda = number_or(g, "lambda", 0.0, "garding");
    const Mesh2D mesh = mesh_from_config(g.value("mesh", json{{"n", 8}}), t.m());
    const auto op = assemble(mesh, t);
    const auto gr = garding_constant(op, lambda);
    rep["gamma_garding"] = gr.value;
    rep["lambda_used"] = lambda;
    rep["flags"]["garding_ok"] = gr.value > 0;
    bool pure_neumann = true;
    for (int i = 0; i < mesh.num_components(); ++i) pure_neumann = pure_neumann && !mesh.has_dirichlet(i);
    if (pure_neumann) rep["caveat"] = "LH insufficient: no Dirichlet part, Legendre-Hadamard does not imply Gårding";
  }
  ctx.out.add_json("report.json", rep);
}

void cmd_geometry_check(Context& ctx) {
  const json& p = ctx.params;
  check_keys(p, {"mesh", "m", "radii", "samples"}, "geometry-check");
  const int m = integer_or(p, "m", 1, "geometry-check");
  if (m < 1) throw InputError("invalid_config", "geometry-check: m must be positive");
  const Mesh2D mesh = mesh_from_config(p.value("mesh", json::object()), m);
  std::vector<double> radii = p.value("radii", std::vector<double>{0.05, 0.1});
  const auto rep = check_geometry(mesh, radii, integer_or(p, "samples", 16, "geometry-check"));
  json ah = json::array();
  for (const auto& r : rep.ahlfors)
    ah.push_back(r.applicable ? json{{"min", r.min}, {"max", r.max}} : json("not applicable"));
  double area = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) area += mesh.signed_area(t);
  ctx.out.add_json("report.json", {{"ahlfors", ah},
                                   {"density", {{"min", rep.density.min}, {"max", rep.density.max}}},
                                   {"sample_count", rep.sample_count},
                                   {"warnings", rep.warnings},
                                   {"num_vertices", mesh.num_vertices()},
                                   {"num_triangles", mesh.num_triangles()},
                                   {"max_edge_length", mesh.max_edge_length()},
                                   {"area", area}});
  ctx.out.add_json("mesh.json", io::mesh_to_json(mesh));
}

void cmd_lions(Context& ctx) {
  const json& p = ctx.params;
  check_keys(p, {"mesh", "m", "families", "T", "N", "gamma", "M_max", "lambda", "Lambda", "tolerance"}, "lions");
  const int m = integer_or(p, "m", 1, "lions");
  const int count = integer_or(p, "families", 4, "lions");
  const double gamma = number_or(p, "gamma", 0.5, "lions");
  const double mmax = number_or(p, "M_max", 2.0, "lions");
  const double lambda = number_or(p, "lambda", 0.0, "lions");
  const double Lambda = number_or(p, "Lambda", lambda + 1.0, "lions");
  const double tol = number_or(p, "tolerance", 0.05, "lions");
  if (count < 1 || !(gamma > 0) || !(mmax >= gamma)) throw InputError("invalid_config", "lions: bad family parameters");
  const TimeGrid grid(0.0, number_or(p, "T", 1.0, "lions"), integer_or(p, "N", 32, "lions"));
  const Mesh2D mesh = mesh_from_config(p.value("mesh", json{{"n", 16}}), m);
  auto sp = std::make_shared<const FESpace>(mesh);

  std::mt19937_64 rng(ctx.seed);
  std::vector<double> times;
  for (int n = 0; n <= grid.N; ++n) times.push_back(grid.node(n));
  json fams = json::array();
  bool all = true;
  for (int k = 0; k < count; ++k) {
    const TensorFamily fam = random::hermitian_family(rng, m, 2, gamma, mmax, times);
    const double M = tensor_sup_norm(fam, times);
    std::normal_distribution<double> g;
    std::vector<double> coef(6);
    for (auto& c : coef) c = g(rng);
    const LoadSeries f = sample_loads(*sp, grid, [&](double t, int i, const EvalPoint& x) {
      return Complex(coef[0] * std::sin(3 * t + coef[1]) * x.x(0) + coef[2] * x.x(1) * (i + 1),
                     coef[3] * std::cos(2 * t) + coef[4] * x.x(0) * x.x(1) + coef[5]);
    });
    const auto rep = lions_verify(sp, fam, lambda, gamma, M, Lambda, f, grid, tol);
    all = all && rep.pass;
    fams.push_back({{"c_theoretical", rep.c_theoretical},
                    {"c_observed", rep.c_observed},
                    {"M", rep.M},
                    {"min_garding", rep.min_garding},
                    {"precondition_ok", rep.precondition_ok},
                    {"pass", rep.pass}});
  }
  ctx.out.add_json("report.json", {{"families", fams},
                                   {"all_pass", all},
                                   {"lambda", lambda},
                                   {"gamma", gamma},
                                   {"Lambda", Lambda},
                                   {"tolerance", tol},
                                   {"seed", ctx.seed}});
}

VectorC initial_from(const FESpace& sp, const json& j) {
  const std::string type = j.is_string() ? j.get<std::string>() : j.value("type", std::string("zero"));
  if (j.is_object()) check_keys(j, {"type", "amplitude"}, "initial");
  const double a = j.is_object() ? number_or(j, "amplitude", 1.0, "initial") : 1.0;
  if (type == "zero") return VectorC::Zero(sp.size());
  if (type == "sine")
    return sp.interpolate([a](int, const Point2& x) {
      return Complex(a * std::sin(std::numbers::pi * x[0]) * std::sin(std::numbers::pi * x[1]));
    });
  if (type == "constant") return sp.interpolate([a](int, const Point2&) { return Complex(a); });
  throw InputError("invalid_config", "initial: unknown type '" + type + "'");
}

void cmd_solve_parabolic(Context& ctx) {
  const json& p = ctx.params;
  check_keys(p, {"mesh", "tensor", "family", "Lambda", "time", "source", "initial", "r", "q"}, "solve-parabolic");
  if (p.contains("tensor") == p.contains("family"))
    throw InputError("invalid_config", "solve-parabolic: give exactly one of 'tensor' or 'family'");
  const TensorFamily fam =
      p.contains("tensor") ? TensorFamily::constant(io::tensor_from_json(p.at("tensor"))) : io::family_from_json(p.at("family"));
  const Mesh2D mesh = mesh_from_config(p.value("mesh", json{{"n", 8}}), fam.m());
  auto sp = std::make_shared<const FESpace>(mesh);
  const json time = p.value("time", json::object());
  check_keys(time, {"t0", "T", "N"}, "time");
  const TimeGrid grid = grid_from(time);
  const Complex Lambda = complex_param(p, "Lambda", 0.0);
  const double r = number_or(p, "r", 2.0, "solve-parabolic"), q = number_or(p, "q", 2.0, "solve-parabolic");

  const json src = p.value("source", json{{"type", "zero"}});
  check_keys(src, {"type", "value"}, "source");
  const std::string st = src.value("type", std::string("zero"));
  LoadSeries f;
  if (st == "zero") {
    f = zero_loads(*sp, grid);
  } else if (st == "constant") {
    const Complex v = complex_param(src, "value", 1.0);
    f = sample_loads(*sp, grid, [v](double, int, const EvalPoint&) { return v; });
  } else if (st == "mms") {
    if (fam.m() != 1) throw InputError("invalid_config", "mms source needs m = 1");
    f = sample_loads(*sp, grid, [](double t, int, const EvalPoint& x) {
      return Complex(ManufacturedSolution::heat_source(t, {x.x(0), x.x(1)}));
    });
  } else {
    throw InputError("invalid_config", "source: unknown type '" + st + "'");
  }
  const VectorC u0 = initial_from(*sp, p.value("initial", json("zero")));

  const Trajectory u = step_solve(sp, fam, Lambda, f, u0, grid);
  const MaxRegNorm mr = maxreg_norm(*sp, u, r, q);
  json rep = {{"maxreg_norm", mr.value},
              {"solution_part", mr.solution_part},
              {"derivative_part", mr.derivative_part},
              {"exact", mr.exact},
              {"max_l2", max_l2_norm(*sp, u)},
              {"dofs", sp->size()},
              {"steps", grid.N}};
  const auto th = threshold_diagnostic(r, q);
  rep["thresholds"] = {{"q_above_d", th.q_above_d}, {"r_threshold", th.r_threshold}, {"admissible", th.admissible},
                       {"alpha_sup", th.alpha_sup}};
  if (st == "mms")
    rep["l2_w12_error"] = l2_w12_error(
        *sp, u, [](double t, int, const Point2& x) { return Complex(ManufacturedSolution::value(t, x)); },
        [](double t, int, const Point2& x) { return ManufacturedSolution::gradient(t, x); });
  ctx.out.add_json("report.json", rep);
  ctx.out.add("trajectory.csv", trajectory_csv(*sp, u));
}

CoefficientMap coefficient_map_from(const json& j, const FESpace& sp, int m) {
  check_keys(j, {"name", "tensor", "slope", "scale"}, "coefficients");
  const std::string name = j.value("name", std::string("constant"));
  if (name == "constant")
    return maps::constant(j.contains("tensor") ? io::tensor_from_json(j.at("tensor")) : CoefficientTensor::identity(m, 2));
  if (name == "time_linear")
    return maps::time_linear(j.contains("tensor") ? io::tensor_from_json(j.at("tensor")) : CoefficientTensor::identity(m, 2),
                             number_or(j, "slope", 1.0, "coefficients"));
  if (name == "local_state") return maps::local_state(sp);
  if (name == "nonlocal_mean") return maps::nonlocal_mean(m, number_or(j, "scale", 1.0, "coefficients"));
  throw InputError("invalid_config", "coefficients: unknown map '" + name + "'");
}

void cmd_solve_quasilinear(Context& ctx) {
  const json& p = ctx.params;
  check_keys(p, {"mesh", "m", "time", "coefficients", "forcing", "initial", "mode", "tol", "max_iter", "continuation",
                 "cutoff_eps"},
             "solve-quasilinear");
  const int m = integer_or(p, "m", 1, "solve-quasilinear");
  const Mesh2D mesh = mesh_from_config(p.value("mesh", json{{"n", 8}}), m);
  auto sp = std::make_shared<const FESpace>(mesh);
  const json time = p.value("time", json::object());
  check_keys(time, {"t0", "T", "N"}, "time");
  const TimeGrid grid = grid_from(time);
  const CoefficientMap a = coefficient_map_from(p.value("coefficients", json::object()), *sp, m);

  const json fj = p.value("forcing", json{{"name", "zero"}});
  check_keys(fj, {"name", "c", "s"}, "forcing");
  const std::string fname = fj.value("name", std::string("zero"));
  ForcingMap phi;
  if (fname == "zero") {
    phi = maps::zero(*sp);
  } else if (fname == "linear_mass") {
    phi = maps::linear_mass(number_or(fj, "c", 0.1, "forcing"));
  } else if (fname == "mms") {
    if (m != 1) throw InputError("invalid_config", "mms forcing needs m = 1");
    phi = maps::loads(sample_loads(*sp, grid, [](double t, int, const EvalPoint& x) {
      return Complex(ManufacturedSolution::quasilinear_source(t, {x.x(0), x.x(1)}));
    }));
  } else {
    throw InputError("invalid_config", "forcing: unknown map '" + fname + "'");
  }
  if (fj.contains("s")) phi.growth_exponent = number(fj, "s", "forcing");
  const VectorC u0 = initial_from(*sp, p.value("initial", json("zero")));
  const std::string mode = p.value("mode", std::string("picard"));
  const double tol = number_or(p, "tol", 1e-8, "solve-quasilinear");
  const int max_iter = integer_or(p, "max_iter", 50, "solve-quasilinear");

  json rep = {{"mode", mode}, {"coefficients", a.name()}, {"forcing", phi.name()}};
  Trajectory u;
  if (mode == "picard") {
    PicardOptions opt;
    opt.tol = tol;
    opt.max_iter = max_iter;
    const auto pr = picard_solve(sp, a, &phi, u0, grid, opt);
    rep["iterations"] = pr.iterations;
    rep["residuals"] = pr.residuals;
    rep["interval_solved"] = {grid.t0, grid.T};
    u = pr.u;
  } else if (mode == "continuation") {
    const json c = p.value("continuation", json::object());
    check_keys(c, {"lambda", "gamma", "M", "Lambda", "C_E", "check_ellipticity"}, "continuation");
    ContinuationOptions opt;
    opt.lambda = number_or(c, "lambda", 0.0, "continuation");
    opt.gamma = number_or(c, "gamma", 1.0, "continuation");
    opt.M = number_or(c, "M", 1.0, "continuation");
    if (c.contains("Lambda")) opt.Lambda = number(c, "Lambda", "continuation");
    opt.C_E = number_or(c, "C_E", 1.0, "continuation");
    opt.check_ellipticity = c.value("check_ellipticity", true);
    opt.tol = tol;
    opt.max_iter = max_iter;
    const auto r = continuation_solve(sp, a, &phi, u0, grid, opt);
    json ws = json::array();
    for (const auto& w : r.windows)
      ws.push_back({{"first", w.first}, {"last", w.last}, {"iterations", w.iterations}, {"residual", w.residual},
                    {"garding", w.garding}, {"maxreg", w.maxreg}});
    rep["windows"] = ws;
    rep["window_count"] = r.windows.size();
    rep["window_length"] = r.window_length;
    rep["nodes_per_window"] = r.nodes_per_window;
    rep["lions_constant"] = r.lions_constant;
    rep["global"] = r.global;
    rep["interval_solved"] = {grid.t0, r.S};
    u = r.u;
  } else {
    throw InputError("invalid_config", "solve-quasilinear: mode must be 'picard' or 'continuation'");
  }
  if (p.contains("cutoff_eps")) {
    PicardOptions opt;
    opt.tol = tol;
    opt.max_iter = max_iter;
    const auto cw = continuity_window_check(sp, a, &phi, u0, number(p, "cutoff_eps", "solve-quasilinear"), grid, opt);
    rep["continuity_window"] = {{"delta", cw.delta}, {"node", cw.node}};
  }
  rep["maxreg_norm"] = maxreg_norm(*sp, u, 2.0, 2.0).value;
  ctx.out.add_json("report.json", rep);
  ctx.out.add("trajectory.csv", trajectory_csv(*sp, u));
}

chemo::AffineCoefficient affine_from(const json& j, const std::string& where) {
  if (j.is_number()) return {j.get<double>(), 0.0, 0.0};
  check_keys(j, {"c0", "cu", "cv"}, where);
  return {number_or(j, "c0", 0.0, where), number_or(j, "cu", 0.0, where), number_or(j, "cv", 0.0, where)};
}

chemo::QuadraticReaction reaction_from(const json& j) {
  check_keys(j, {"c", "l", "q"}, "g");
  chemo::QuadraticReaction g;
  g.c = number_or(j, "c", 0.0, "g");
  if (j.contains("l")) {
    const auto l = j.at("l").get<std::vector<double>>();
    if (l.size() != 4) throw InputError("invalid_config", "g: 'l' needs 4 entries");
    for (size_t i = 0; i < 4; ++i) g.l[i] = l[i];
  }
  if (j.contains("q")) {
    const auto q = j.at("q").get<std::vector<std::vector<double>>>();
    if (q.size() != 4) throw InputError("invalid_config", "g: 'q' must be 4 x 4");
    for (size_t i = 0; i < 4; ++i) {
      if (q[i].size() != 4) throw InputError("invalid_config", "g: 'q' must be 4 x 4");
      for (size_t k = 0; k < 4; ++k) g.q[i][k] = q[i][k];
    }
  }
  return g;
}

chemo::InitialProfile profile_from(const json& j) {
  check_keys(j, {"type", "mean", "amplitude", "center", "radius"}, "initial");
  chemo::InitialProfile p;
  const std::string t = j.value("type", std::string("constant"));
  if (t == "constant") p.kind = chemo::InitialProfile::Kind::constant;
  else if (t == "bump") p.kind = chemo::InitialProfile::Kind::bump;
  else if (t == "cosine") p.kind = chemo::InitialProfile::Kind::cosine;
  else throw InputError("invalid_config", "initial: unknown type '" + t + "'");
  p.mean = number_or(j, "mean", 0.0, "initial");
  p.amplitude = number_or(j, "amplitude", 0.0, "initial");
  if (j.contains("center")) p.center = {j.at("center").at(0).get<double>(), j.at("center").at(1).get<double>()};
  p.radius = number_or(j, "radius", 0.3, "initial");
  return p;
}

json condition_json(const chemo::ConditionReport& c) {
  return {{"lh_fails_full", c.lh_fails_full},
          {"witness", c.witness},
          {"legendre_reduced", c.legendre_reduced},
          {"reduced_inequality", c.reduced_inequality},
          {"reduced_ok", c.reduced_ok},
          {"kappa1", c.kappa1},
          {"kappa2", c.kappa2},
          {"sigma1", c.sigma1},
          {"sigma2", c.sigma2},
          {"alpha1", c.alpha1},
          {"alpha2", c.alpha2}};
}

void cmd_chemotaxis(Context& ctx) {
  const json& p = ctx.params;
  check_keys(p, {"mesh", "time", "mode", "kappa", "sigma", "alpha", "g", "initial", "dirichlet", "tol", "max_iter"},
             "chemotaxis");
  chemo::ChemotaxisParams cp;
  auto pair = [&](const char* key) {
    const json& a = p.at(key);
    if (!a.is_array() || a.size() != 2) throw InputError("invalid_config", std::string("chemotaxis: '") + key + "' needs 2 entries");
    return a;
  };
  if (p.contains("kappa")) {
    const json a = pair("kappa");
    for (size_t i = 0; i < 2; ++i) cp.kappa[i] = affine_from(a[i], "kappa");
  }
  if (p.contains("sigma")) {
    const json a = pair("sigma");
    for (size_t i = 0; i < 2; ++i) cp.sigma[i] = affine_from(a[i], "sigma");
  }
  if (p.contains("alpha")) {
    const json a = pair("alpha");
    for (size_t i = 0; i < 2; ++i) cp.alpha[i] = a[i].get<double>();
  }
  if (p.contains("g")) {
    const json a = pair("g");
    for (size_t i = 0; i < 2; ++i) cp.g[i] = reaction_from(a[i]);
  }
  if (p.contains("initial")) {
    const json& a = p.at("initial");
    if (!a.is_array() || a.size() != 4) throw InputError("invalid_config", "chemotaxis: 'initial' needs 4 profiles");
    for (size_t i = 0; i < 4; ++i) cp.initial[i] = profile_from(a[i]);
  }
  if (p.contains("dirichlet")) {
    const auto d = p.at("dirichlet").get<std::vector<std::vector<int>>>();
    if (d.size() != 4) throw InputError("invalid_config", "chemotaxis: 'dirichlet' needs 4 lists");
    for (size_t i = 0; i < 4; ++i) cp.dirichlet[i] = d[i];
  }
  cp.validate();
  const json mj = p.value("mesh", json{{"n", 8}});
  check_keys(mj, {"domain", "h", "n"}, "mesh");
  const DomainSpec dom = domain_from_json(mj.value("domain", json("unit_square")));
  const double h = mj.contains("n") ? 1.0 / io::integer(mj, "n", "mesh") : number(mj, "h", "mesh");
  const json time = p.value("time", json::object());
  check_keys(time, {"t0", "T", "N"}, "time");
  const TimeGrid grid = grid_from(time);
  const std::string mode = p.value("mode", std::string("reduced2"));
  if (mode != "full4" && mode != "reduced2" && mode != "both")
    throw InputError("invalid_config", "chemotaxis: mode must be full4, reduced2 or both");
  const double tol = number_or(p, "tol", 1e-8, "chemotaxis");
  const int max_iter = integer_or(p, "max_iter", 50, "chemotaxis");
  const auto spaces = chemo::make_spaces(cp, dom, h);

  json summary = json::object();
  std::vector<std::pair<std::string, chemo::SimulationResult>> runs;
  if (mode != "reduced2") runs.emplace_back("full4", chemo::simulate(cp, chemo::Mode::full4, *spaces, grid, tol, max_iter));
  if (mode != "full4") runs.emplace_back("reduced2", chemo::simulate(cp, chemo::Mode::reduced2, *spaces, grid, tol, max_iter));
  const char* names[4] = {"u1", "v1", "u2", "v2"};
  for (const auto& [name, r] : runs) {
    json s = {{"picard_iterations", r.picard_iterations},
              {"picard_residuals", r.picard_residuals},
              {"min_values", r.min_values},
              {"mass_u1", {r.mass[0].front(), r.mass[0].back()}},
              {"mass_u2", {r.mass[1].front(), r.mass[1].back()}},
              {"warnings", r.warnings},
              {"non_coercive", r.non_coercive}};
    if (r.full_garding) s["full_garding_lambda1"] = *r.full_garding;
    summary[name] = s;
    for (int c = 0; c < 4; ++c) {
      std::ostringstream os;
      os << std::setprecision(17) << "t";
      for (int v = 0; v < spaces->mesh4.num_vertices(); ++v) os << ",x" << v;
      os << '\n';
      for (int n = 0; n <= grid.N; ++n) {
        os << grid.node(n);
        for (double x : chemo::field_values(*spaces->full, r.fields.values[static_cast<size_t>(n)], c)) os << ',' << x;
        os << '\n';
      }
      ctx.out.add(name + "_" + names[c] + ".csv", os.str());
    }
  }
  if (runs.size() == 2) {
    double num = 0.0, den = 0.0;
    for (int n = 1; n <= grid.N; ++n) {
      num += std::pow(spaces->full->l2_norm(runs[0].second.fields.values[static_cast<size_t>(n)] -
                                            runs[1].second.fields.values[static_cast<size_t>(n)]),
                      2);
      den += std::pow(spaces->full->l2_norm(runs[0].second.fields.values[static_cast<size_t>(n)]), 2);
    }
    summary["relative_l2l2_difference"] = den > 0 ? std::sqrt(num / den) : std::sqrt(num);
  }
  ctx.out.add_json("conditions.json", condition_json(runs.front().second.conditions));
  ctx.out.add_json("summary.json", summary);
}

const std::map<std::string, void (*)(Context&)>& commands() {
  static const std::map<std::string, void (*)(Context&)> c = {
      {"analyze-tensor", cmd_analyze_tensor}, {"sneiberg", cmd_sneiberg},
      {"lions", cmd_lions},                   {"solve-parabolic", cmd_solve_parabolic},
      {"solve-quasilinear", cmd_solve_quasilinear}, {"chemotaxis", cmd_chemotaxis},
      {"geometry-check", cmd_geometry_check}};
  return c;
}

json error_json(const std::string& command, const std::string& reason, const std::string& message) {
  return {{"command", command}, {"reason", reason}, {"message", message}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"parsys: ellipticity analysis and solvers for parabolic systems"};
  std::string command, config_path, out_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;
  app.add_option("command", command, "analyze-tensor | sneiberg | lions | solve-parabolic | solve-quasilinear | "
                                     "chemotaxis | geometry-check")
      ->required();
  app.add_option("--config", config_path, "scenario JSON")->required();
  app.add_option("--out", out_dir, "output directory (overrides output_dir)");
  auto* seed_opt = app.add_option("--seed", seed, "seed for randomized runs (overrides seed)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  seed_given = seed_opt->count() > 0;

  auto fail = [&](const std::string& reason, const std::string& message) {
    std::cerr << error_json(command, reason, message).dump() << "\n";
    return 2;
  };

  const auto it = commands().find(command);
  if (it == commands().end()) return fail("unknown_command", "unknown command '" + command + "'");

  Context ctx;
  fs::path out;
  try {
    std::ifstream is(config_path);
    if (!is) return fail("io_error", "cannot read " + config_path);
    json cfg;
    try {
      cfg = json::parse(is);
    } catch (const json::parse_error& e) {
      return fail("malformed_config", e.what());
    }
    check_keys(cfg, {"command", "params", "output_dir", "seed"}, "config");
    if (cfg.contains("command") && cfg.at("command") != command)
      return fail("command_mismatch", "config is for '" + cfg.at("command").get<std::string>() + "'");
    ctx.params = cfg.value("params", json::object());
    ctx.seed = seed_given ? seed : cfg.value("seed", std::uint64_t{0});
    out = !out_dir.empty() ? fs::path(out_dir) : fs::path(cfg.value("output_dir", std::string("out")));
  } catch (const Error& e) {
    return fail(e.reason(), e.what());
  } catch (const json::exception& e) {
    return fail("invalid_config", e.what());
  }

  try {
    it->second(ctx);
    ctx.out.write(out);
    std::cout << (out / "report.json").string() << "\n";
    return 0;
  } catch (const InputError& e) {
    return fail(e.reason(), e.what());
  } catch (const json::exception& e) {
    return fail("invalid_config", e.what());
  } catch (const SolverError& e) {
    Artifacts diag;
    diag.add_json("diagnostic.json", error_json(command, e.reason(), e.what()));
    try {
      diag.write(out);
    } catch (const std::exception&) {
    }
    std::cerr << error_json(command, e.reason(), e.what()).dump() << "\n";
    return 3;
  } catch (const std::exception& e) {
    Artifacts diag;
    diag.add_json("diagnostic.json", error_json(command, "internal_error", e.what()));
    try {
      diag.write(out);
    } catch (const std::exception&) {
    }
    std::cerr << error_json(command, "internal_error", e.what()).dump() << "\n";
    return 3;
  }
}
