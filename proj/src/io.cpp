#include "eqq/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "eqq/errors.hpp"

namespace eqq {

using nlohmann::json;

namespace {

namespace fs = std::filesystem;

json parse_json(std::string_view text, const char* what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("malformed ") + what + " JSON: " + e.what());
  }
}

template <class T>
T get(const json& j, const char* key) {
  require(j.contains(key), ErrorCode::InvalidArgument, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::InvalidArgument, std::string("field '") + key + "' has the wrong type");
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? get<T>(j, key) : fallback;
}

const std::map<std::string, MeasureKind>& kind_names() {
  static const std::map<std::string, MeasureKind> m{
      {"uniform_cube", MeasureKind::UniformCube}, {"uniform_set", MeasureKind::UniformSet},
      {"gaussian", MeasureKind::Gaussian},        {"mixture", MeasureKind::Mixture},
      {"two_blocks", MeasureKind::TwoBlocks},     {"segment", MeasureKind::SegmentSingular}};
  return m;
}

std::string kind_name(MeasureKind k) {
  for (const auto& [name, kind] : kind_names())
    if (kind == k) return name;
  return "unknown";
}

MeasureSpec spec_from(const json& j) {
  require(j.is_object(), ErrorCode::InvalidArgument, "measure spec must be a JSON object");
  const auto kind = get<std::string>(j, "kind");
  const auto it = kind_names().find(kind);
  require(it != kind_names().end(), ErrorCode::InvalidArgument, "unknown measure kind: " + kind);
  MeasureSpec s;
  switch (it->second) {
    case MeasureKind::UniformCube: s = MeasureSpec::uniform_cube(get<int>(j, "d")); break;
    case MeasureKind::Gaussian:
      s = MeasureSpec::gaussian(get<std::vector<double>>(j, "mean"), get<double>(j, "sigma"));
      break;
    case MeasureKind::TwoBlocks:
      s = MeasureSpec::two_blocks(get<std::vector<double>>(j, "shift"), get_or<double>(j, "beta", 0.5));
      break;
    case MeasureKind::SegmentSingular:
      s = MeasureSpec::segment(get<std::vector<double>>(j, "a"), get<std::vector<double>>(j, "b"));
      break;
    case MeasureKind::UniformSet: {
      const json& ind = get<json>(j, "indicator");
      if (ind.contains("disk")) {
        const json& disk = ind.at("disk");
        const auto c = get<std::vector<double>>(disk, "center");
        require(c.size() == 2, ErrorCode::InvalidArgument, "disk center needs two coordinates");
        s = MeasureSpec::uniform_set(
            IndicatorGrid::disk(c[0], c[1], get<double>(disk, "radius"), get<int>(disk, "resolution")));
      } else {
        IndicatorGrid g;
        g.box = Box(get<std::vector<double>>(ind, "lo"), get<std::vector<double>>(ind, "hi"));
        if (ind.contains("inside")) {
          g.shape = get<std::vector<int>>(ind, "shape");
          g.inside = get<std::vector<std::uint8_t>>(ind, "inside");
        } else {
          g = IndicatorGrid::full(g.box);
        }
        s = MeasureSpec::uniform_set(std::move(g));
      }
      break;
    }
    case MeasureKind::Mixture: {
      std::vector<std::pair<double, MeasureSpec>> parts;
      for (const auto& part : get<json>(j, "parts")) {
        const double w = get<double>(part, "w");
        parts.emplace_back(w, spec_from(part.contains("spec") ? part.at("spec") : part));
      }
      s = MeasureSpec::mixture(std::move(parts));
      break;
    }
  }
  if (j.contains("d")) require(get<int>(j, "d") == s.d, ErrorCode::DimensionMismatch, "declared d disagrees with the spec");
  s.declared_total = get_or<double>(j, "total", 1.0);
  s.validate();
  return s;
}

json spec_json(const MeasureSpec& s) {
  json j{{"kind", kind_name(s.kind)}, {"d", s.d}};
  switch (s.kind) {
    case MeasureKind::UniformCube: break;
    case MeasureKind::Gaussian:
      j["mean"] = s.mean;
      j["sigma"] = s.sigma;
      break;
    case MeasureKind::TwoBlocks:
      j["shift"] = s.shift;
      j["beta"] = s.beta;
      break;
    case MeasureKind::SegmentSingular:
      j["a"] = s.seg_a;
      j["b"] = s.seg_b;
      break;
    case MeasureKind::UniformSet:
      j["indicator"] = {{"lo", s.indicator.box.lo},
                        {"hi", s.indicator.box.hi},
                        {"shape", s.indicator.shape},
                        {"inside", s.indicator.inside}};
      break;
    case MeasureKind::Mixture: {
      json parts = json::array();
      for (std::size_t i = 0; i < s.parts.size(); ++i) parts.push_back({{"w", s.weights[i]}, {"spec", spec_json(s.parts[i])}});
      j["parts"] = parts;
      break;
    }
  }
  if (s.declared_total != 1.0) j["total"] = s.declared_total;
  return j;
}

// Splits on commas, trimming spaces and a trailing carriage return.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r' && ch != ' ' && ch != '\t') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

double to_double(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::InvalidArgument, "line " + std::to_string(line) + ": not a number: '" + s + "'");
}

bool numeric_row(const std::vector<std::string>& cells) {
  for (const auto& c : cells) {
    if (c.empty()) return false;
    char* end = nullptr;
    std::strtod(c.c_str(), &end);
    if (*end != '\0') return false;
  }
  return true;
}

json cloud_points(const PointCloud& c) {
  json pts = json::array();
  for (std::size_t i = 0; i < c.size(); ++i) pts.push_back(std::vector<double>(c.point(i), c.point(i) + c.d));
  return pts;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::Io, "cannot write " + tmp.string());
    out << content;
    out.flush();
    require(static_cast<bool>(out), ErrorCode::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  require(!ec, ErrorCode::Io, "cannot rename into " + path + ": " + ec.message());
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

MeasureSpec parse_spec(std::string_view json_text) { return spec_from(parse_json(json_text, "measure spec")); }

std::string spec_to_json(const MeasureSpec& spec) { return dump(spec_json(spec)); }

void write_grid(const std::string& path, const GridDensity& grid) {
  grid.check();
  fs::path csv_path(path);
  csv_path.replace_extension(".cells.csv");
  std::string csv = "flat_index,mass\n";
  for (std::size_t f = 0; f < grid.cell_count(); ++f)
    if (grid.masses[f] != 0.0) csv += std::to_string(f) + "," + format_double(grid.masses[f]) + "\n";
  std::vector<std::size_t> singular;
  for (std::size_t f = 0; f < grid.singular.size(); ++f)
    if (grid.singular[f]) singular.push_back(f);
  const json header{{"d", grid.d},          {"shape", grid.shape},   {"origin", grid.origin},
                    {"h", grid.h},          {"total", grid.total},   {"cells", csv_path.filename().string()},
                    {"singular", singular}, {"format", "eqq-grid-1"}};
  write_text_atomic(csv_path.string(), csv);
  write_text_atomic(path, dump(header));
}

GridDensity read_grid(const std::string& path) {
  const json h = parse_json(read_text(path), "grid header");
  const int d = get<int>(h, "d");
  auto shape = get<std::vector<int>>(h, "shape");
  auto origin = get<std::vector<double>>(h, "origin");
  const double spacing = get<double>(h, "h");
  require(d >= 1 && static_cast<int>(shape.size()) == d && static_cast<int>(origin.size()) == d,
          ErrorCode::InvalidArgument, "grid header dimensions disagree");
  std::size_t cells = 1;
  for (int s : shape) {
    require(s >= 1, ErrorCode::InvalidArgument, "grid shape entries must be >= 1");
    cells *= static_cast<std::size_t>(s);
  }
  const fs::path csv_path = fs::path(path).parent_path() / get<std::string>(h, "cells");
  const std::string csv = read_text(csv_path.string());
  std::vector<double> masses(cells, 0.0);
  std::istringstream in(csv);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto f = split_csv_line(line);
    if (f.size() == 1 && f[0].empty()) continue;
    if (lineno == 1 && !numeric_row(f)) continue;  // header
    require(f.size() == 2, ErrorCode::InvalidArgument, "grid cells line " + std::to_string(lineno) + " needs 2 fields");
    const double idx = to_double(f[0], lineno);
    require(idx >= 0 && idx < static_cast<double>(cells) && idx == std::floor(idx), ErrorCode::InvalidArgument,
            "grid cells line " + std::to_string(lineno) + ": bad flat index");
    masses[static_cast<std::size_t>(idx)] = to_double(f[1], lineno);
  }
  std::vector<std::uint8_t> singular;
  const auto sing = get_or<std::vector<std::size_t>>(h, "singular", {});
  if (!sing.empty()) {
    singular.assign(cells, 0);
    for (std::size_t f : sing) {
      require(f < cells, ErrorCode::InvalidArgument, "singular cell index out of range");
      singular[f] = 1;
    }
  }
  auto g = GridDensity::from_masses(d, std::move(shape), std::move(origin), spacing, std::move(masses),
                                    std::move(singular));
  if (h.contains("total")) {
    const double declared = get<double>(h, "total");
    require(std::abs(declared - g.total) <= 1e-12 * std::max(1.0, declared), ErrorCode::InvalidArgument,
            "grid total disagrees with its cells");
    g.total = declared;
  }
  g.check();
  return g;
}

std::string cloud_to_csv(const PointCloud& cloud) {
  std::string out;
  for (int a = 0; a < cloud.d; ++a) out += (a ? ",x" : "x") + std::to_string(a + 1);
  out += "\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int a = 0; a < cloud.d; ++a) out += (a ? "," : "") + format_double(cloud.point(i)[a]);
    out += "\n";
  }
  return out;
}

PointCloud cloud_from_csv(std::string_view csv, double total) {
  std::istringstream in{std::string(csv)};
  std::string line;
  std::vector<double> coords;
  int d = 0;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto f = split_csv_line(line);
    if (f.size() == 1 && f[0].empty()) continue;
    if (lineno == 1 && !numeric_row(f)) continue;
    if (d == 0) d = static_cast<int>(f.size());
    require(static_cast<int>(f.size()) == d, ErrorCode::InvalidArgument,
            "cloud line " + std::to_string(lineno) + " has " + std::to_string(f.size()) + " columns, expected " +
                std::to_string(d));
    for (const auto& s : f) coords.push_back(to_double(s, lineno));
  }
  require(d > 0 && !coords.empty(), ErrorCode::InvalidArgument, "cloud has no points");
  PointCloud c(d, std::move(coords), total);
  c.check();
  return c;
}

std::string cloud_to_json(const PointCloud& cloud) {
  return dump(json{{"d", cloud.d}, {"n", cloud.size()}, {"total", cloud.total()}, {"points", cloud_points(cloud)}});
}

PointCloud cloud_from_json(std::string_view text) {
  const json j = parse_json(text, "cloud");
  const int d = get<int>(j, "d");
  std::vector<double> coords;
  for (const auto& row : get<json>(j, "points")) {
    const auto v = row.get<std::vector<double>>();
    require(static_cast<int>(v.size()) == d, ErrorCode::InvalidArgument, "cloud point has the wrong dimension");
    coords.insert(coords.end(), v.begin(), v.end());
  }
  PointCloud c(d, std::move(coords), get_or<double>(j, "total", 1.0));
  c.check();
  return c;
}

std::string result_to_json(const QuantizerResult& r, int n, double p) {
  json costs = json::array();
  for (const auto& [m, c] : r.method_costs) costs.push_back({{"method", std::string(to_string(m))}, {"cost", c}});
  const json j{{"method", std::string(to_string(r.method))},
               {"seed", r.seed_used},
               {"n", n},
               {"p", p},
               {"d", r.cloud.d},
               {"cost", r.cost},
               {"error", r.error},
               {"restarts", r.restarts},
               {"iterations", r.iterations},
               {"trace", r.trace},
               {"method_costs", costs},
               {"total", r.cloud.total()},
               {"points", cloud_points(r.cloud)}};
  return dump(j);
}

QuantizerResult result_from_json(std::string_view text) {
  const json j = parse_json(text, "quantizer result");
  QuantizerResult r;
  r.method = method_from_string(get<std::string>(j, "method"));
  r.seed_used = get<std::uint64_t>(j, "seed");
  r.cost = get<double>(j, "cost");
  r.error = get<double>(j, "error");
  r.restarts = get<int>(j, "restarts");
  r.iterations = get<int>(j, "iterations");
  r.trace = get<std::vector<double>>(j, "trace");
  for (const auto& mc : get<json>(j, "method_costs"))
    r.method_costs.push_back({method_from_string(get<std::string>(mc, "method")), get<double>(mc, "cost")});
  r.cloud = cloud_from_json(j.dump());
  return r;
}

std::string cost_to_json(double p, double cost, std::string_view mode, std::string_view cell_model) {
  return dump(json{{"p", p},
                   {"cost", cost},
                   {"cost_pow_p", std::pow(cost, p)},
                   {"mode", std::string(mode)},
                   {"cell_model", std::string(cell_model)}});
}

SweepResult sweep_from_csv(std::string_view csv) {
  std::istringstream in{std::string(csv)};
  std::string line;
  SweepResult s;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto f = split_csv_line(line);
    if (f.size() == 1 && f[0].empty()) continue;
    if (lineno == 1) {
      require(line.rfind("n,method,p,d,error,scaled_error,seed,restarts,runtime_ms", 0) == 0,
              ErrorCode::InvalidArgument, "sweep CSV header is not recognized");
      continue;
    }
    require(f.size() == 9, ErrorCode::InvalidArgument, "sweep line " + std::to_string(lineno) + " needs 9 fields");
    SweepRow r;
    r.n = static_cast<int>(to_double(f[0], lineno));
    r.method = f[1];
    r.p = to_double(f[2], lineno);
    r.d = static_cast<int>(to_double(f[3], lineno));
    r.error = to_double(f[4], lineno);
    r.scaled_error = to_double(f[5], lineno);
    r.seed = std::stoull(f[6]);
    r.restarts = static_cast<int>(to_double(f[7], lineno));
    r.runtime_ms = to_double(f[8], lineno);
    r.failed = r.method == "failed";
    s.rows.push_back(r);
  }
  return s;
}

std::string report_to_json(const BoundReport& r) {
  json j{{"p", r.p}, {"d", r.d}, {"zador_functional", r.zador_functional}};
  auto put = [&](const char* key, const std::optional<double>& v) { j[key] = v ? json(*v) : json(nullptr); };
  put("empirical_functional_full", r.empirical_functional_full);
  put("empirical_functional_excl", r.empirical_functional_excl);
  put("q_lower_input", r.q_lower_input);
  put("q_upper_input", r.q_upper_input);
  put("rhs_L", r.rhs_L);
  put("rhs_U", r.rhs_U);
  put("rhs_zador", r.rhs_zador);
  return dump(j);
}

std::string coefficient_to_json(const CoefficientEstimate& e, int d, std::size_t rows) {
  return dump(json{{"estimate", e.value}, {"argmin_n", e.n}, {"d", d}, {"rows", rows}, {"kind", "upper_estimate"}});
}

}  // namespace eqq
