// pencilrank: decompose 2 x m x n tensors into few rank-one terms.
//
// Exit codes: 0 ok, 1 verification failure, 2 usage/parse error, 3 internal.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pencilrank/json_io.hpp"
#include "pencilrank/oracle.hpp"
#include "pencilrank/pencil.hpp"
#include "pencilrank/reducer.hpp"

using namespace pencilrank;

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                   t0)
      .count();
}

std::uint64_t default_seed() {
  if (const char* env = std::getenv("PENCILRANK_SEED")) {
    try {
      return std::stoull(env);
    } catch (...) {
      throw PencilError("PENCILRANK_SEED is not an integer");
    }
  }
  return 0;
}

std::string trace_json(const std::vector<TraceEntry>& trace) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (i) os << ",";
    os << "{\"branch\":\"" << trace[i].branch << "\",\"m\":" << trace[i].m
       << ",\"n\":" << trace[i].n << ",\"terms\":" << trace[i].terms_emitted << "}";
  }
  os << "]";
  return os.str();
}

// CommandResult on stdout: {"status":..,"payload":..,"trace":..,"timings":..}
void emit_result(const std::string& status, const std::string& payload,
                 const std::string& trace, double total_ms) {
  std::ostringstream os;
  os << "{\"status\":\"" << status << "\",\"payload\":" << payload;
  if (!trace.empty()) os << ",\"trace\":" << trace;
  os << ",\"timings\":{\"total_ms\":" << format_double(total_ms) << "}}\n";
  std::cout << os.str();
}

void emit_error(const std::string& code, const std::string& message,
                double total_ms) {
  std::ostringstream payload;
  std::string esc;
  for (char c : message) {
    if (c == '"' || c == '\\') esc += '\\';
    if (c == '\n') {
      esc += "\\n";
      continue;
    }
    esc += c;
  }
  payload << "{\"error\":\"" << code << "\",\"message\":\"" << esc << "\"}";
  emit_result("error", payload.str(), "", total_ms);
}

int cmd_decompose(const std::string& input, const std::string& output, double tol,
                  std::uint64_t seed, bool want_trace) {
  auto t0 = std::chrono::steady_clock::now();
  Pencil T;
  try {
    T = read_pencil_file(input);
  } catch (const std::exception& e) {
    emit_error("parse_failure", e.what(), ms_since(t0));
    return 2;
  }
  try {
    ReducerConfig cfg;
    cfg.seed = seed;
    cfg.tol = tol;
    DecomposeResult res = decompose_traced(T, cfg);
    write_file(output, decomposition_to_json(res.decomp));
    double r = residual(T, res.decomp);
    RankBound bound = max_rank_bound(T.rows(), T.cols());
    std::ostringstream payload;
    payload << "{\"m\":" << T.rows() << ",\"n\":" << T.cols()
            << ",\"terms\":" << res.decomp.term_count()
            << ",\"residual\":" << format_double(r)
            << ",\"max_rank_bound\":" << bound.bound << "}";
    emit_result("ok", payload.str(), want_trace ? trace_json(res.trace) : "",
                ms_since(t0));
    return 0;
  } catch (const std::exception& e) {
    emit_error("decompose_failure", e.what(), ms_since(t0));
    return 3;
  }
}

int cmd_verify(const std::string& tensor_path, const std::string& decomp_path,
               double tol) {
  auto t0 = std::chrono::steady_clock::now();
  Pencil T;
  Decomposition D;
  try {
    T = read_pencil_file(tensor_path);
    D = read_decomposition_file(decomp_path);
  } catch (const std::exception& e) {
    emit_error("parse_failure", e.what(), ms_since(t0));
    return 2;
  }
  if (T.rows() != D.m || T.cols() != D.n) {
    emit_error("shape_mismatch", "tensor and decomposition shapes differ",
               ms_since(t0));
    return 2;
  }
  double r = residual(T, D);
  RankBound bound = max_rank_bound(T.rows(), T.cols());
  bool residual_ok = r <= tol;
  bool count_ok = D.term_count() <= bound.bound;
  std::ostringstream payload;
  payload << "{\"residual\":" << format_double(r)
          << ",\"residual_ok\":" << (residual_ok ? "true" : "false")
          << ",\"terms\":" << D.term_count() << ",\"max_rank_bound\":" << bound.bound
          << ",\"count_ok\":" << (count_ok ? "true" : "false");
  if (!count_ok) payload << ",\"flag\":\"count_exceeds_bound\"";
  payload << "}";
  emit_result(residual_ok && count_ok ? "ok" : "error", payload.str(), "",
              ms_since(t0));
  return residual_ok && count_ok ? 0 : 1;
}

int cmd_table(Index mmax, Index nmax) {
  auto t0 = std::chrono::steady_clock::now();
  std::ostringstream payload;
  payload << "{\"mmax\":" << mmax << ",\"nmax\":" << nmax << ",\"table\":[";
  for (Index m = 1; m <= mmax; ++m) {
    if (m > 1) payload << ",";
    payload << "[";
    for (Index n = 1; n <= nmax; ++n) {
      if (n > 1) payload << ",";
      payload << max_rank_bound(m, n).bound;
    }
    payload << "]";
  }
  payload << "]}";
  // Aligned text table on stderr so stdout stays pure JSON.
  std::ostringstream txt;
  txt << "r(2,m,n)";
  for (Index n = 1; n <= nmax; ++n) txt << "\t" << n;
  txt << "\n";
  for (Index m = 1; m <= mmax; ++m) {
    txt << m;
    for (Index n = 1; n <= nmax; ++n) txt << "\t" << max_rank_bound(m, n).bound;
    txt << "\n";
  }
  std::cerr << txt.str();
  emit_result("ok", payload.str(), "", ms_since(t0));
  return 0;
}

int cmd_gen(const std::string& kind, Index m, Index n, Index rank,
            const std::vector<double>& angles, std::uint64_t seed,
            const std::string& output) {
  auto t0 = std::chrono::steady_clock::now();
  try {
    Pencil T;
    if (kind == "random") {
      if (m < 1 || n < 1) throw PencilError("gen random: need m, n >= 1");
      T = gen_random(m, n, seed);
    } else if (kind == "rotation") {
      if (n < 1) throw PencilError("gen rotation: need n >= 1");
      T = angles.empty() ? gen_rotation_pencil(n) : gen_rotation_pencil(n, angles);
    } else if (kind == "rank-deficient") {
      if (n < 2) throw PencilError("gen rank-deficient: need n >= 2");
      T = gen_rank_deficient(n, seed, rank);
    } else {
      throw PencilError("unknown generator kind: " + kind);
    }
    write_file(output, pencil_to_json(T));
    std::ostringstream payload;
    payload << "{\"kind\":\"" << kind << "\",\"m\":" << T.rows()
            << ",\"n\":" << T.cols() << ",\"path\":\"" << output << "\"}";
    emit_result("ok", payload.str(), "", ms_since(t0));
    return 0;
  } catch (const std::exception& e) {
    emit_error("invalid_args", e.what(), ms_since(t0));
    return 2;
  }
}

int cmd_oracle(const std::string& input, Index max_rank, int restarts,
               std::uint64_t seed) {
  auto t0 = std::chrono::steady_clock::now();
  Pencil T;
  try {
    T = read_pencil_file(input);
  } catch (const std::exception& e) {
    emit_error("parse_failure", e.what(), ms_since(t0));
    return 2;
  }
  try {
    AlsConfig cfg;
    cfg.restarts = restarts;
    cfg.seed = seed;
    UnfoldingRanks ur = unfolding_ranks(T);
    Index lower = std::max({ur.r1, ur.r2, ur.r3});
    Index cap = max_rank_bound(T.rows(), T.cols()).bound;
    if (max_rank > 0) cap = std::min(cap, max_rank);
    Index upper = cap;
    bool found = false;
    std::ostringstream residuals;
    residuals << "[";
    bool first = true;
    for (Index r = lower; r <= cap; ++r) {
      double res = 0.0;
      als_fit(T, r, cfg, nullptr, &res);
      if (!first) residuals << ",";
      first = false;
      residuals << "{\"rank\":" << r << ",\"best_residual\":" << format_double(res)
                << "}";
      if (!found && res <= cfg.success_tol) {
        upper = r;
        found = true;
        break;
      }
    }
    residuals << "]";
    std::ostringstream payload;
    payload << "{\"lower\":" << lower << ",\"upper\":" << upper
            << ",\"certified\":" << (found ? "true" : "false")
            << ",\"per_rank\":" << residuals.str() << "}";
    emit_result("ok", payload.str(), "", ms_since(t0));
    return 0;
  } catch (const std::exception& e) {
    emit_error("oracle_failure", e.what(), ms_since(t0));
    return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rank-one decomposition of 2 x m x n tensors"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  bool seed_given = false;

  // decompose
  auto* dec = app.add_subcommand("decompose", "decompose a tensor file");
  std::string dec_in, dec_out;
  double dec_tol = kRankTol;
  bool dec_trace = false;
  dec->add_option("input", dec_in, "tensor JSON file")->required();
  dec->add_option("output", dec_out, "decomposition JSON file")->required();
  dec->add_option("--tol", dec_tol, "rank tolerance");
  dec->add_option("--seed", seed, "RNG seed")->each([&](const std::string&) {
    seed_given = true;
  });
  dec->add_flag("--trace", dec_trace, "include the dispatch trace");

  // verify
  auto* ver = app.add_subcommand("verify", "check a decomposition against a tensor");
  std::string ver_tensor, ver_decomp;
  double ver_tol = 1e-8;
  ver->add_option("tensor", ver_tensor, "tensor JSON file")->required();
  ver->add_option("decomposition", ver_decomp, "decomposition JSON file")->required();
  ver->add_option("--tol", ver_tol, "residual tolerance");

  // table
  auto* tab = app.add_subcommand("table", "print the r(2,m,n) bound table");
  Index mmax = 10, nmax = 10;
  tab->add_option("--mmax", mmax, "max m")->check(CLI::Range(1, 64));
  tab->add_option("--nmax", nmax, "max n")->check(CLI::Range(1, 64));

  // gen
  auto* gen = app.add_subcommand("gen", "generate a tensor file");
  std::string gen_kind, gen_out;
  Index gen_m = 0, gen_n = 0, gen_rank = -1;
  std::vector<double> gen_angles;
  gen->add_option("kind", gen_kind, "random | rotation | rank-deficient")->required();
  gen->add_option("output", gen_out, "output JSON file")->required();
  gen->add_option("--m", gen_m, "rows");
  gen->add_option("--n", gen_n, "columns");
  gen->add_option("--rank", gen_rank, "slice rank (rank-deficient)");
  gen->add_option("--angle", gen_angles, "rotation angles, cycled over blocks");
  gen->add_option("--seed", seed, "RNG seed")->each([&](const std::string&) {
    seed_given = true;
  });

  // oracle
  auto* ora = app.add_subcommand("oracle", "ALS rank estimate for a tensor file");
  std::string ora_in;
  Index ora_max_rank = 0;
  int ora_restarts = 50;
  ora->add_option("input", ora_in, "tensor JSON file")->required();
  ora->add_option("--max-rank", ora_max_rank, "cap the rank search");
  ora->add_option("--restarts", ora_restarts, "ALS restarts per rank");
  ora->add_option("--seed", seed, "RNG seed")->each([&](const std::string&) {
    seed_given = true;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (!seed_given) seed = default_seed();
    if (dec->parsed()) return cmd_decompose(dec_in, dec_out, dec_tol, seed, dec_trace);
    if (ver->parsed()) return cmd_verify(ver_tensor, ver_decomp, ver_tol);
    if (tab->parsed()) return cmd_table(mmax, nmax);
    if (gen->parsed())
      return cmd_gen(gen_kind, gen_m, gen_n, gen_rank, gen_angles, seed, gen_out);
    if (ora->parsed()) return cmd_oracle(ora_in, ora_max_rank, ora_restarts, seed);
  } catch (const std::exception& e) {
    emit_error("internal", e.what(), 0.0);
    return 3;
  }
  return 2;
}
