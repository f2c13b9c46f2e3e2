#ifndef TRUNCLOG_IO_HPP
#define TRUNCLOG_IO_HPP

// JSON serialisation of algebra elements, paths, systems and reports, plus
// CSV and gnuplot emission.

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "trunclog/bounds.hpp"
#include "trunclog/errors.hpp"
#include "trunclog/flows.hpp"
#include "trunclog/free_lie.hpp"
#include "trunclog/magnus.hpp"
#include "trunclog/tensor_algebra.hpp"

namespace trunclog {

using json = nlohmann::json;

/// Shortest decimal text that round-trips a double.
inline std::string format_double(double x) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

namespace io {

inline json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Eigen::VectorXd vector_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw ConfigError(std::string(what) + ": expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(std::string(what) + ": expected an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vector_to_json(m.row(i).transpose()));
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw ConfigError(std::string(what) + ": expected a non-empty array of rows");
  const auto n = static_cast<Eigen::Index>(j.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd r = vector_from_json(j[static_cast<std::size_t>(i)], what);
    if (r.size() != n) throw ConfigError(std::string(what) + ": matrix must be square");
    m.row(i) = r.transpose();
  }
  return m;
}

// --- tensors and Lie coordinates -------------------------------------------

inline json to_json(const GradedTensor& t) {
  json levels = json::array();
  for (int k = 0; k <= t.kappa(); ++k) levels.push_back(vector_to_json(t.level(k)));
  return {{"d", t.params().d}, {"kappa", t.kappa()}, {"levels", levels}};
}

inline GradedTensor tensor_from_json(const json& j) {
  const AlgebraParams p(j.at("d").get<int>(), j.at("kappa").get<int>());
  const json& levels = j.at("levels");
  if (!levels.is_array() || static_cast<int>(levels.size()) != p.kappa + 1)
    throw ConfigError("tensor: need kappa + 1 levels");
  GradedTensor t(p);
  for (int k = 0; k <= p.kappa; ++k) {
    const Eigen::VectorXd v = vector_from_json(levels[static_cast<std::size_t>(k)], "tensor level");
    if (static_cast<std::size_t>(v.size()) != p.level_size(k)) throw ConfigError("tensor: level " + std::to_string(k) + " has wrong size");
    t.level(k) = v;
  }
  return t;
}

inline json to_json(const LieCoordinates& c) { return vector_to_json(c.coeffs()); }

inline LieCoordinates lie_from_json(const json& j, const HallBasisPtr& basis) {
  const Eigen::VectorXd v = vector_from_json(j, "Lie coordinates");
  if (static_cast<std::size_t>(v.size()) != basis->size())
    throw ConfigError("Lie coordinates: expected " + std::to_string(basis->size()) + " entries");
  return LieCoordinates(basis, v);
}

inline json to_json(const HallBasis& b) {
  json words = json::array();
  for (std::size_t i = 0; i < b.size(); ++i) {
    const auto& w = b.words()[i];
    json letters = json::array();
    for (int l : w.letters) letters.push_back(l + 1);
    words.push_back({{"index", i},
                     {"degree", w.degree},
                     {"bracket", b.bracket_string(static_cast<int>(i))},
                     {"letters", letters},
                     {"embedding", to_json(b.word_element(static_cast<int>(i)).tensor())["levels"]}});
  }
  return {{"d", b.params().d}, {"kappa", b.params().kappa}, {"dimensions", b.degree_dimensions()}, {"words", words}};
}

// --- control paths ---------------------------------------------------------

inline json to_json(const ControlPath& p) {
  if (p.is_piecewise_constant()) {
    json vals = json::array();
    for (const auto& v : p.pieces().values) vals.push_back(to_json(v));
    return {{"kind", "pwc"}, {"T", p.horizon()}, {"breakpoints", p.pieces().breakpoints}, {"values", vals}};
  }
  const auto& sp = p.smooth_rep();
  if (sp.poly.empty()) throw ConfigError("path: only piecewise-constant and polynomial paths serialise");
  json coeffs = json::array();
  for (const auto& c : sp.poly) coeffs.push_back(vector_to_json(c));
  return {{"kind", "polynomial"}, {"T", p.horizon()}, {"coeffs", coeffs}};
}

/// Accepted kinds: pwc, constant, polynomial, two-segment. Random paths are
/// resolved by the experiment layer, which owns the seed.
inline ControlPath path_from_json(const json& j, const HallBasisPtr& basis) {
  const std::string kind = j.value("kind", "pwc");
  if (kind == "pwc") {
    std::vector<LieCoordinates> vals;
    for (const auto& v : j.at("values")) vals.push_back(lie_from_json(v, basis));
    if (!j.contains("breakpoints")) return ControlPath::piecewise_constant(std::move(vals));
    return ControlPath::piecewise_constant(j.at("breakpoints").get<std::vector<double>>(), std::move(vals));
  }
  if (kind == "constant") return ControlPath::constant(lie_from_json(j.at("value"), basis), j.value("T", 1.0));
  if (kind == "polynomial") {
    std::vector<Eigen::VectorXd> coeffs;
    for (const auto& c : j.at("coeffs")) coeffs.push_back(lie_from_json(c, basis).coeffs());
    return ControlPath::polynomial(basis, j.value("T", 1.0), std::move(coeffs));
  }
  if (kind == "two-segment") return smooth_two_segment(lie_from_json(j.at("A"), basis), lie_from_json(j.at("B"), basis));
  throw ConfigError("path: unknown kind '" + kind + "'");
}

// --- polynomial fields and systems -----------------------------------------

inline std::string monomial_key(const Monomial& m) {
  std::string s;
  for (std::size_t i = 0; i < m.size(); ++i) s += (i ? "," : "") + std::to_string(m[i]);
  return s;
}

inline Monomial monomial_from_key(const std::string& key, int n) {
  Monomial m;
  std::stringstream ss(key);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      m.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw ConfigError("monomial key '" + key + "' is not a comma-separated exponent tuple");
    }
  }
  if (static_cast<int>(m.size()) != n) throw ConfigError("monomial key '" + key + "' has wrong arity");
  return m;
}

/// A field is a list of components; each component maps "e1,...,en" exponent
/// tuples to coefficients.
inline json to_json(const PolyVectorField& f) {
  json comps = json::array();
  for (const auto& p : f.components()) {
    json c = json::object();
    for (const auto& [m, coeff] : p.terms()) c[monomial_key(m)] = coeff;
    comps.push_back(c);
  }
  return comps;
}

inline PolyVectorField field_from_json(const json& j, int n) {
  if (!j.is_array() || static_cast<int>(j.size()) != n)
    throw ConfigError("field: expected " + std::to_string(n) + " components");
  std::vector<Polynomial> comps;
  for (const auto& c : j) {
    Polynomial p(n);
    for (const auto& [key, coeff] : c.items()) p.add_term(monomial_from_key(key, n), coeff.get<double>());
    comps.push_back(std::move(p));
  }
  return PolyVectorField(std::move(comps));
}

inline json to_json(const DynamicalSystem& s) {
  json fields = json::array();
  for (const auto& f : s.base_fields()) fields.push_back(to_json(f));
  const int n = s.manifold().is_sphere() ? s.dim() - 1 : s.dim();
  return {{"name", s.name()}, {"manifold", s.manifold().name()}, {"n", n}, {"fields", fields}};
}

inline DynamicalSystem system_from_json(const json& j, const HallBasisPtr& basis) {
  const std::string man = j.value("manifold", "flat");
  if (man != "flat" && man != "sphere") throw ConfigError("system: manifold must be 'flat' or 'sphere'");
  const int n = j.at("n").get<int>();
  if (n < 1) throw ConfigError("system: n must be >= 1");
  const Manifold M = man == "flat" ? Manifold::flat(n) : Manifold::sphere(n);
  std::vector<PolyVectorField> fields;
  for (const auto& f : j.at("fields")) fields.push_back(field_from_json(f, M.ambient));
  try {
    return DynamicalSystem(M, basis, std::move(fields), j.value("name", "custom"));
  } catch (const DomainError& e) {
    throw ConfigError(std::string("system: ") + e.what());
  }
}

// --- norms -----------------------------------------------------------------

inline json to_json(const NormEstimate& e) {
  return {{"quantity", e.quantity}, {"value", e.value}, {"points", e.points}, {"lie_samples", e.lie_samples}, {"region", e.region}};
}

inline json to_json(const DynNorms& n, int kappa) {
  json pairs = json::array();
  for (const auto& p : n.pairs) pairs.push_back({{"m", p.m}, {"n", p.n}, {"c0", p.c0}, {"c1", p.c1}});
  json all = json::array();
  for (const auto& e : n.all()) all.push_back(to_json(e));
  return {{"estimates", all},
          {"commutators", pairs},
          {"c0_bound", n.c0_bound(kappa)},
          {"c1_bound", n.c1_bound(kappa)},
          {"note", "maxima over finite samples: lower estimates of the sups, restricted to the sampled region"}};
}

// --- text output -----------------------------------------------------------

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  f << text;
}

inline std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// Rows of numbers; empty optional cells written as blank fields.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(const std::vector<double>& r) {
    std::vector<std::string> s;
    for (double x : r) s.push_back(format_double(x));
    rows.push_back(std::move(s));
  }
  std::string str() const {
    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
    out += "\n";
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + r[i];
      out += "\n";
    }
    return out;
  }
};

/// Log-log gnuplot script plotting column y against column x of a CSV.
inline std::string gnuplot_script(const std::string& csv, const std::string& title, int xcol, int ycol,
                                  const std::string& xlabel, const std::string& ylabel, bool loglog = true) {
  std::ostringstream s;
  s << "set datafile separator ','\n"
    << "set key autotitle columnhead\n"
    << "set title '" << title << "'\n"
    << "set xlabel '" << xlabel << "'\n"
    << "set ylabel '" << ylabel << "'\n";
  if (loglog) s << "set logscale xy\n";
  s << "set terminal pngcairo size 800,600\n"
    << "set output '" << csv.substr(0, csv.rfind('.')) << ".png'\n"
    << "plot '" << csv << "' using " << xcol << ":" << ycol << " with linespoints\n";
  return s.str();
}

}  // namespace io
}  // namespace trunclog

#endif  // TRUNCLOG_IO_HPP
