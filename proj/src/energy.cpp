#include "dkm/energy.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "dkm/error.hpp"

namespace dkm {

namespace {

std::uint64_t mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out;
  if (__builtin_mul_overflow(a, b, &out)) throw ContractError("energy: cost overflows 64 bits");
  return out;
}

std::uint64_t add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out;
  if (__builtin_add_overflow(a, b, &out)) throw ContractError("energy: cost overflows 64 bits");
  return out;
}

std::uint64_t ceil_log2(std::uint64_t d) {
  std::uint64_t bits = 0;
  while ((std::uint64_t{1} << bits) < d) ++bits;
  return bits;
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

std::size_t out_extent(std::size_t in, std::size_t s, std::size_t stride, Padding pad) {
  if (pad == Padding::Same) return ceil_div(in, stride);
  require(in >= s, "energy: filter larger than a valid-padded input");
  return (in - s) / stride + 1;
}

}  // namespace

std::size_t EnergyLayer::h_out() const { return out_extent(h_in, s, stride, padding); }
std::size_t EnergyLayer::w_out() const { return out_extent(w_in, s, stride, padding); }

std::size_t EnergyLayer::m_eff() const {
  const double kept = static_cast<double>(m) * (1.0 - pruned);
  const double rounded = std::round(kept);
  require(std::abs(kept - rounded) < 1e-9, "energy: layer " + name + ": pruned fraction leaves a fractional filter count");
  return static_cast<std::size_t>(rounded);
}

void NetworkSpec::validate() const {
  for (const auto& l : layers) {
    const std::string who = "energy: layer '" + l.name + "': ";
    require(l.bw >= 1 && l.bw <= 64 && l.bx >= 1 && l.bx <= 64, who + "precisions must lie in [1, 64]");
    if (l.kind == EnergyLayerKind::Conv) {
      require(l.s >= 1 && l.c >= 1 && l.m >= 1 && l.h_in >= 1 && l.w_in >= 1 && l.stride >= 1,
              who + "dims must be >= 1");
      require(l.pruned >= 0.0 && l.pruned < 1.0, who + "pruned fraction must lie in [0, 1)");
      require(l.m_eff() >= 1, who + "no filters left after pruning");
      (void)l.h_out();
      (void)l.w_out();
      if (l.shared_k) require(*l.shared_k >= 1 && *l.shared_k <= l.s * l.c * l.m_eff(), who + "K must lie in [1, N]");
    } else {
      require(l.in_dim >= 1 && l.out_dim >= 1, who + "dims must be >= 1");
      require(!l.shared_k && l.pruned == 0.0, who + "sharing and pruning apply to conv layers only");
    }
  }
}

std::uint64_t dot_product_fa(std::uint64_t d, unsigned bw, unsigned bx) {
  require(d >= 1, "dot_product_fa: D must be >= 1");
  const std::uint64_t mults = mul(mul(d, bw), bx);
  const std::uint64_t adder = std::uint64_t{bw} + bx + ceil_log2(d) - 1;
  return add(mults, mul(d - 1, adder));
}

LayerEnergy layer_energy(const EnergyLayer& l) {
  LayerEnergy e;
  e.name = l.name;
  if (l.kind == EnergyLayerKind::Conv) {
    const std::uint64_t m = l.m_eff();
    const std::uint64_t positions = mul(l.h_out(), l.w_out());
    e.comp_fa = mul(mul(m, positions), dot_product_fa(l.s * l.s * l.c, l.bw, l.bx));
    const std::uint64_t weights = l.shared_k ? mul(l.s, *l.shared_k) : mul(mul(l.s * l.s, l.c), m);
    e.weight_rep = mul(mul(positions, weights), l.bw);
    const std::uint64_t reach = ceil_div(l.s, l.stride);
    const std::uint64_t n_x = mul(m, reach * reach);
    e.act_rep = mul(mul(n_x, mul(l.c, mul(l.h_in, l.w_in))), l.bx);
  } else {
    e.comp_fa = mul(l.out_dim, dot_product_fa(l.in_dim, l.bw, l.bx));
    e.weight_rep = mul(mul(l.in_dim, l.out_dim), l.bw);
    e.act_rep = mul(mul(l.out_dim, l.in_dim), l.bx);
  }
  e.comp_mac = static_cast<double>(e.comp_fa) / static_cast<double>(dot_product_fa(1, l.bw, l.bx));
  e.rep_mac = (static_cast<double>(e.weight_rep) + static_cast<double>(e.act_rep)) / (l.bw + l.bx);
  e.total_mac = e.comp_mac + kRepFactor * e.rep_mac;
  return e;
}

EnergyReport total_energy(const NetworkSpec& spec) {
  spec.validate();
  EnergyReport r;
  for (const auto& l : spec.layers) {
    auto e = layer_energy(l);
    r.comp_cost_fa = add(r.comp_cost_fa, e.comp_fa);
    r.weight_rep_cost = add(r.weight_rep_cost, e.weight_rep);
    r.act_rep_cost = add(r.act_rep_cost, e.act_rep);
    r.comp_mac += e.comp_mac;
    r.rep_mac += e.rep_mac;
    r.layers.push_back(std::move(e));
  }
  r.total_energy_mac = r.comp_mac + kRepFactor * r.rep_mac;
  return r;
}

std::uint64_t comp_cost(const NetworkSpec& spec) { return total_energy(spec).comp_cost_fa; }
std::uint64_t weight_rep_cost(const NetworkSpec& spec) { return total_energy(spec).weight_rep_cost; }
std::uint64_t act_rep_cost(const NetworkSpec& spec) { return total_energy(spec).act_rep_cost; }

double r_squared(std::span<const double> xs, std::span<const double> ys) {
  require(xs.size() == ys.size(), "r_squared: series lengths differ");
  require(xs.size() >= 2, "r_squared: need at least two points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0) throw UndefinedFitError("r_squared: xs is constant");
  if (syy == 0.0) return 1.0;  // flat ys is fitted exactly by a zero slope
  return std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
}

NetworkSpec parse_netspec(const std::string& text) {
  NetworkSpec spec;
  std::istringstream lines(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream tokens(line);
    std::string kind;
    if (!(tokens >> kind)) continue;
    const std::string where = "netspec line " + std::to_string(lineno) + ": ";
    EnergyLayer l;
    if (kind == "conv") l.kind = EnergyLayerKind::Conv;
    else if (kind == "fc") l.kind = EnergyLayerKind::FullyConnected;
    else throw FormatError(where + "unknown layer kind '" + kind + "'");

    std::map<std::string, std::string> kv;
    std::string tok;
    while (tokens >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos || eq == 0) throw FormatError(where + "expected key=value, got '" + tok + "'");
      if (!kv.emplace(tok.substr(0, eq), tok.substr(eq + 1)).second)
        throw FormatError(where + "duplicate key '" + tok.substr(0, eq) + "'");
    }
    auto take = [&](const std::string& key, bool required) -> std::optional<std::string> {
      auto it = kv.find(key);
      if (it == kv.end()) {
        if (required) throw FormatError(where + "missing key '" + key + "'");
        return std::nullopt;
      }
      auto v = it->second;
      kv.erase(it);
      return v;
    };
    auto count = [&](const std::string& key, bool required, std::size_t fallback) -> std::size_t {
      const auto v = take(key, required);
      if (!v) return fallback;
      std::size_t pos = 0;
      unsigned long long out = 0;
      try {
        out = std::stoull(*v, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != v->size() || v->empty() || (*v)[0] == '-')
        throw FormatError(where + "'" + key + "' is not a count: '" + *v + "'");
      return static_cast<std::size_t>(out);
    };

    l.name = take("name", false).value_or(kind + std::to_string(spec.layers.size() + 1));
    l.bw = static_cast<unsigned>(count("bw", false, 16));
    l.bx = static_cast<unsigned>(count("bx", false, 16));
    if (l.kind == EnergyLayerKind::Conv) {
      l.s = count("s", true, 0);
      l.c = count("c", true, 0);
      l.m = count("m", true, 0);
      l.h_in = count("h", true, 0);
      l.w_in = count("w", true, 0);
      l.stride = count("stride", false, 1);
      const auto pad = take("pad", false).value_or("valid");
      if (pad == "valid") l.padding = Padding::Valid;
      else if (pad == "same") l.padding = Padding::Same;
      else throw FormatError(where + "pad must be valid or same");
      if (kv.count("k")) l.shared_k = count("k", true, 0);
      if (const auto p = take("pruned", false)) {
        char* end = nullptr;
        l.pruned = std::strtod(p->c_str(), &end);
        if (p->empty() || *end != '\0') throw FormatError(where + "'pruned' is not a number");
      }
    } else {
      l.in_dim = count("in", true, 0);
      l.out_dim = count("out", true, 0);
    }
    if (!kv.empty()) throw FormatError(where + "unknown key '" + kv.begin()->first + "'");
    spec.layers.push_back(std::move(l));
  }
  try {
    spec.validate();
  } catch (const ContractError& e) {
    throw FormatError(std::string("netspec: ") + e.what());
  }
  return spec;
}

NetworkSpec load_netspec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_netspec(ss.str());
}

std::string format_netspec(const NetworkSpec& spec) {
  std::string out;
  char buf[256];
  for (const auto& l : spec.layers) {
    if (l.kind == EnergyLayerKind::Conv) {
      std::snprintf(buf, sizeof buf, "conv name=%s s=%zu c=%zu m=%zu h=%zu w=%zu stride=%zu pad=%s bw=%u bx=%u",
                    l.name.c_str(), l.s, l.c, l.m, l.h_in, l.w_in, l.stride,
                    l.padding == Padding::Same ? "same" : "valid", l.bw, l.bx);
      out += buf;
      if (l.shared_k) out += " k=" + std::to_string(*l.shared_k);
      if (l.pruned != 0.0) {
        std::snprintf(buf, sizeof buf, " pruned=%.17g", l.pruned);
        out += buf;
      }
    } else {
      std::snprintf(buf, sizeof buf, "fc name=%s in=%zu out=%zu bw=%u bx=%u", l.name.c_str(), l.in_dim, l.out_dim,
                    l.bw, l.bx);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

NetworkSpec netspec_from_arch(const Architecture& arch, unsigned bw, unsigned bx) {
  NetworkSpec spec;
  std::size_t conv = 0, fc = 0;
  for (std::size_t i = 0; i < arch.layers().size(); ++i) {
    const auto& ls = arch.layers()[i];
    EnergyLayer l;
    l.bw = bw;
    l.bx = bx;
    if (ls.kind == LayerKind::Conv) {
      const auto& in = arch.shape_at(i);
      l.kind = EnergyLayerKind::Conv;
      l.name = "conv" + std::to_string(++conv);
      l.s = ls.kernel;
      l.c = ls.in_c;
      l.m = ls.out_c;
      l.h_in = in.h;
      l.w_in = in.w;
      l.stride = ls.stride;
      l.padding = ls.padding;
    } else if (ls.kind == LayerKind::FullyConnected) {
      l.kind = EnergyLayerKind::FullyConnected;
      l.name = "fc" + std::to_string(++fc);
      l.in_dim = ls.in_dim;
      l.out_dim = ls.out_dim;
    } else {
      continue;
    }
    spec.layers.push_back(std::move(l));
  }
  spec.validate();
  return spec;
}

NetworkSpec netspec_from_compressed(const CompressedModel& cm, unsigned bw, unsigned bx) {
  NetworkSpec spec = netspec_from_arch(cm.passthrough.arch(), bw, bx);
  std::size_t next = 0;
  for (auto& l : spec.layers)
    if (l.kind == EnergyLayerKind::Conv) l.shared_k = cm.layers.at(next++).codebook.k();
  spec.validate();
  return spec;
}

std::string format_energy_report(const EnergyReport& report) {
  std::string out =
      "# energy report\n"
      "# comp_fa: 1-bit full adders per decision; weight_rep, act_rep: bits x uses\n"
      "# conv: N_w = H_out*W_out, |W| = s*s*c*m (s*K when shared, index bits excluded),\n"
      "#       N_x = m*ceil(s/stride)^2, |X| = c*H_in*W_in; pruning removes filters\n"
      "# fc:   N_w = 1, |W| = in*out, N_x = out, |X| = in\n"
      "# comp_mac = comp_fa/(Bw*Bx); rep_mac = (weight_rep+act_rep)/(Bw+Bx);"
      " total_mac = comp_mac + 6*rep_mac\n";
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-10s %16s %16s %16s %18s %18s %18s\n", "layer", "comp_fa", "weight_rep",
                "act_rep", "comp_mac", "rep_mac", "total_mac");
  out += buf;
  auto row = [&](const std::string& name, std::uint64_t c, std::uint64_t w, std::uint64_t a, double cm, double rm,
                 double tm) {
    std::snprintf(buf, sizeof buf, "%-10s %16llu %16llu %16llu %18.4f %18.4f %18.4f\n", name.c_str(),
                  static_cast<unsigned long long>(c), static_cast<unsigned long long>(w),
                  static_cast<unsigned long long>(a), cm, rm, tm);
    out += buf;
  };
  for (const auto& l : report.layers) row(l.name, l.comp_fa, l.weight_rep, l.act_rep, l.comp_mac, l.rep_mac, l.total_mac);
  row("total", report.comp_cost_fa, report.weight_rep_cost, report.act_rep_cost, report.comp_mac, report.rep_mac,
      report.total_energy_mac);
  return out;
}

}  // namespace dkm
