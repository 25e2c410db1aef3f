#include "matchfree/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "matchfree/errors.hpp"
#include "matchfree/hungarian.hpp"

namespace matchfree {

const char* bench_method_name(BenchMethod m) {
  switch (m) {
    case BenchMethod::kHungarian:
      return "hungarian";
    case BenchMethod::kMatchFreeForward:
      return "matchfree_fwd";
    case BenchMethod::kMatchFreeForwardBackward:
      return "matchfree_fwd_bwd";
  }
  return "?";
}

BenchMethod parse_bench_method(const std::string& s) {
  for (auto m : {BenchMethod::kHungarian, BenchMethod::kMatchFreeForward, BenchMethod::kMatchFreeForwardBackward}) {
    if (s == bench_method_name(m)) return m;
  }
  throw ValidationError("unknown bench method '" + s + "'");
}

void BenchSpec::validate() const {
  if (repetitions < 5) throw ValidationError("bench repetitions must be >= 5");
  if (warmup < 1) throw ValidationError("bench warmup must be >= 1");
  if (num_classes == 0) throw ValidationError("bench num_classes must be positive");
  if (methods.empty()) throw ValidationError("bench needs at least one method");
  if (!(min_sample_ms > 0.0)) throw ValidationError("bench min_sample_ms must be positive");
  for (const auto& [m, n] : grid) {
    if (n == 0) throw ValidationError("bench cells need N >= 1");
    (void)m;
  }
}

const BenchCell* BenchResult::find(BenchMethod method, std::size_t m, std::size_t n) const {
  for (const auto& c : cells) {
    if (c.method == method && c.m == m && c.n == n) return &c;
  }
  return nullptr;
}

namespace {

using Clock = std::chrono::steady_clock;

double quantile(std::vector<double> sorted, double q) {
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

template <typename F>
BenchCell time_cell(BenchMethod method, std::size_t m, std::size_t n, const BenchSpec& spec, F&& fn) {
  for (std::size_t w = 0; w < spec.warmup; ++w) fn();

  auto once = [&](std::size_t inner) {
    const auto t0 = Clock::now();
    for (std::size_t k = 0; k < inner; ++k) fn();
    const std::chrono::duration<double, std::milli> dt = Clock::now() - t0;
    return dt.count();
  };
  // Grow the inner loop until one sample clears the timer-resolution floor.
  std::size_t inner = 1;
  double probe = once(inner);
  while (probe < spec.min_sample_ms && inner < (std::size_t{1} << 20)) {
    inner *= 2;
    probe = once(inner);
  }

  std::vector<double> samples;
  samples.reserve(spec.repetitions);
  for (std::size_t r = 0; r < spec.repetitions; ++r) {
    samples.push_back(once(inner) / static_cast<double>(inner));
  }
  BenchCell c;
  c.method = method;
  c.m = m;
  c.n = n;
  c.median_ms = quantile(samples, 0.5);
  c.iqr_ms = quantile(samples, 0.75) - quantile(samples, 0.25);
  c.reps = spec.repetitions;
  c.inner_loops = inner;
  return c;
}

std::string now_iso8601() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct CellInputs {
  GroundTruthSet gts;
  PredictionSet preds;
};

CellInputs make_inputs(std::size_t m, std::size_t n, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> size(0.05, 0.4);
  std::normal_distribution<double> logit(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, static_cast<int>(k) - 1);
  auto box = [&] {
    Box b;
    b.w = size(rng);
    b.h = size(rng);
    b.cx = 0.5 * b.w + unit(rng) * (1.0 - b.w);
    b.cy = 0.5 * b.h + unit(rng) * (1.0 - b.h);
    return b;
  };
  CellInputs in;
  for (std::size_t i = 0; i < m; ++i) {
    in.gts.boxes.push_back(box());
    in.gts.labels.push_back(label(rng));
  }
  in.preds.logits = Matrix(n, k);
  for (double& v : in.preds.logits.values()) v = logit(rng);
  for (std::size_t j = 0; j < n; ++j) in.preds.boxes.push_back(box());
  return in;
}

}  // namespace

BenchResult run_bench(const BenchSpec& spec, const GtProbeConfig& probe_cfg, const LossConfig& loss_cfg) {
  spec.validate();
  loss_cfg.validate();
  BenchResult result;
  result.cores = std::thread::hardware_concurrency();
  result.timestamp = now_iso8601();

  std::mt19937_64 probe_rng(spec.seed);
  const GtProbeParams probe = GtProbeParams::init(spec.num_classes, probe_cfg, probe_rng);
  volatile double sink = 0.0;

  for (std::size_t c = 0; c < spec.grid.size(); ++c) {
    const auto [m, n] = spec.grid[c];
    const CellInputs in = make_inputs(m, n, spec.num_classes, spec.seed * 1000003ULL + c);
    const CostMatrix cost = broadcast_cost(in.gts, in.preds, loss_cfg.cost, loss_cfg.cls_mode);

    for (BenchMethod method : spec.methods) {
      switch (method) {
        case BenchMethod::kHungarian:
          if (m == 0) break;
          result.cells.push_back(time_cell(method, m, n, spec, [&] {
            sink = sink + hungarian_match(cost.values).total_cost;
          }));
          break;
        case BenchMethod::kMatchFreeForward:
          result.cells.push_back(time_cell(method, m, n, spec, [&] {
            sink = sink + loss_forward_backward_with_cost(in.gts, in.preds, cost, probe, probe_cfg, loss_cfg, nullptr)
                              .report.l_total;
          }));
          break;
        case BenchMethod::kMatchFreeForwardBackward:
          result.cells.push_back(time_cell(method, m, n, spec, [&] {
            Gradients g = Gradients::zeros_like(probe, in.preds);
            sink = sink + loss_forward_backward_with_cost(in.gts, in.preds, cost, probe, probe_cfg, loss_cfg, &g)
                              .report.l_total;
          }));
          break;
      }
    }
  }
  return result;
}

std::string bench_summary(const BenchResult& r) {
  std::ostringstream os;
  os << "# cores=" << r.cores << " timestamp=" << r.timestamp << '\n';
  for (const auto& c : r.cells) {
    if (c.method != BenchMethod::kHungarian) continue;
    for (auto mf : {BenchMethod::kMatchFreeForward, BenchMethod::kMatchFreeForwardBackward}) {
      if (const BenchCell* o = r.find(mf, c.m, c.n); o && o->median_ms > 0.0) {
        os << "# speedup M=" << c.m << " N=" << c.n << " hungarian/" << bench_method_name(mf) << " = "
           << c.median_ms / o->median_ms << '\n';
      }
    }
  }
  return os.str();
}

void emit_report(const BenchResult& r, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << "method,M,N,median_ms,iqr_ms,reps\n";
  f.precision(17);
  for (const auto& c : r.cells) {
    f << bench_method_name(c.method) << ',' << c.m << ',' << c.n << ',' << c.median_ms << ',' << c.iqr_ms << ','
      << c.reps << '\n';
  }
  if (!r.cells.empty()) f << bench_summary(r);
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

BenchResult parse_report(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  BenchResult r;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != "method,M,N,median_ms,iqr_ms,reps") throw ValidationError("unexpected bench CSV header");
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 6) {
      throw ValidationError("bench CSV line " + std::to_string(lineno) + ": expected 6 fields");
    }
    BenchCell c;
    c.method = parse_bench_method(fields[0]);
    c.m = std::stoul(fields[1]);
    c.n = std::stoul(fields[2]);
    c.median_ms = std::stod(fields[3]);
    c.iqr_ms = std::stod(fields[4]);
    c.reps = std::stoul(fields[5]);
    r.cells.push_back(c);
  }
  return r;
}

std::vector<ShapeCheck> check_scaling(const BenchResult& r) {
  std::map<std::size_t, std::vector<std::size_t>> ns_by_m;
  for (const auto& c : r.cells) {
    if (c.m == 0) continue;
    auto& ns = ns_by_m[c.m];
    if (std::find(ns.begin(), ns.end(), c.n) == ns.end()) ns.push_back(c.n);
  }
  std::vector<ShapeCheck> checks;
  auto fmt = [](double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
  };
  for (auto& [m, ns] : ns_by_m) {
    std::sort(ns.begin(), ns.end());
    const std::string tag = "M=" + std::to_string(m);
    for (std::size_t k = 0; k + 1 < ns.size(); ++k) {
      const std::size_t n1 = ns[k], n2 = ns[k + 1];
      const BenchCell* h1 = r.find(BenchMethod::kHungarian, m, n1);
      const BenchCell* h2 = r.find(BenchMethod::kHungarian, m, n2);
      const BenchCell* f1 = r.find(BenchMethod::kMatchFreeForwardBackward, m, n1);
      const BenchCell* f2 = r.find(BenchMethod::kMatchFreeForwardBackward, m, n2);
      const std::string span = tag + " N " + std::to_string(n1) + "->" + std::to_string(n2);
      if (h1 && h2) {
        checks.push_back({"hungarian_monotone " + span, h2->median_ms >= 0.9 * h1->median_ms,
                          fmt(h1->median_ms) + " ms -> " + fmt(h2->median_ms) + " ms"});
      }
      if (f1 && f2) {
        const double rf = f2->median_ms / f1->median_ms;
        const double growth = static_cast<double>(n2) / static_cast<double>(n1);
        checks.push_back({"matchfree_quasi_linear " + span, rf <= 1.5 * growth,
                          "ratio " + fmt(rf) + " vs bound " + fmt(1.5 * growth)});
        if (h1 && h2) {
          const double rh = h2->median_ms / h1->median_ms;
          checks.push_back({"growth_hungarian_exceeds_matchfree " + span, rh > rf,
                            "hungarian " + fmt(rh) + " vs matchfree " + fmt(rf)});
        }
      }
    }
    if (!ns.empty()) {
      const std::size_t nmax = ns.back();
      const BenchCell* h = r.find(BenchMethod::kHungarian, m, nmax);
      const BenchCell* f = r.find(BenchMethod::kMatchFreeForwardBackward, m, nmax);
      if (h && f) {
        checks.push_back({"matchfree_faster_at_max_n " + tag + " N=" + std::to_string(nmax),
                          f->median_ms < h->median_ms,
                          "matchfree " + fmt(f->median_ms) + " ms vs hungarian " + fmt(h->median_ms) + " ms"});
      }
    }
  }
  return checks;
}

}  // namespace matchfree
