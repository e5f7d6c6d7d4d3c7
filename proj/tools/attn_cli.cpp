// Command-line driver: approximate-attention runs, scaling benchmarks,
// gradient checks, and the attention-oracle reductions. Matrices travel as
// CSV files; benchmark and reduction results are emitted as JSON.
//
// Exit codes: 0 success, 1 usage error, 2 check failure, 3 runtime error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "attn/attn1d.hpp"
#include "attn/attnd.hpp"
#include "attn/bench.hpp"
#include "attn/detail/parallel.hpp"
#include "attn/exact.hpp"
#include "attn/gradient.hpp"
#include "attn/matrix.hpp"
#include "attn/reductions.hpp"
#include "attn/rng.hpp"

using attn::Matrix;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0, kExitUsage = 1, kExitCheck = 2, kExitRuntime = 3;

Matrix random_matrix(attn::Rng& rng, std::size_t n, std::size_t d, double bound) {
    Matrix m(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) m(i, j) = rng.uniform(-bound, bound);
    return m;
}

Matrix random_binary(attn::Rng& rng, std::size_t n, std::size_t d) {
    Matrix m(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) m(i, j) = rng.coin() ? 1.0 : 0.0;
    return m;
}

std::vector<double> column_of(const Matrix& m, std::size_t j) {
    std::vector<double> v(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) v[i] = m(i, j);
    return v;
}

Matrix run_algo(const std::string& algo, const Matrix& q, const Matrix& k, const Matrix& v,
                double eps, attn::RunStats* stats) {
    attn::AttnParams params = attn::AttnParams::for_inputs(q, k, v, eps);
    if (algo == "exact") {
        attn::Timer t;
        Matrix out = attn::exact_attention(q, k, v);
        if (stats) stats->query_seconds = t.seconds();
        return out;
    }
    if (algo == "poly1d" || algo == "round1d") {
        if (q.cols() != 1)
            throw CLI::ValidationError("--algo " + algo + " requires d = 1 input");
        attn::Timer t;
        auto qv = column_of(q, 0), kv = column_of(k, 0), vv = column_of(v, 0);
        auto out = algo == "poly1d" ? attn::vector_attention(qv, kv, vv, params)
                                    : attn::rounding_attention_1d(qv, kv, vv, params);
        if (stats) stats->query_seconds = t.seconds();
        Matrix m(out.size(), 1);
        for (std::size_t i = 0; i < out.size(); ++i) m(i, 0) = out[i];
        return m;
    }
    if (algo == "polyd") return attn::approx_attention(q, k, v, params, stats);
    if (algo == "lowrank") return attn::low_rank_attention(q, k, v, params, stats);
    throw CLI::ValidationError("unknown --algo '" + algo + "'");
}

json flag_echo(const std::vector<std::pair<std::string, json>>& flags) {
    json j = json::object();
    for (const auto& [k, v] : flags) j[k] = v;
    return j;
}

int guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const CLI::ValidationError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

// ---- attn -------------------------------------------------------------------

struct AttnArgs {
    std::string algo = "exact", q_path, k_path, v_path, out_path;
    double eps = 1e-2;
    bool check = false;
    std::size_t check_max_n = 4096;
    unsigned threads = 0;
};

int cmd_attn(const AttnArgs& a) {
    attn::set_threads(a.threads == 0 ? 1 : a.threads);
    Matrix q = attn::load_matrix(a.q_path);
    Matrix k = attn::load_matrix(a.k_path);
    Matrix v = attn::load_matrix(a.v_path);
    Matrix out = run_algo(a.algo, q, k, v, a.eps, nullptr);
    if (!a.out_path.empty()) attn::store_matrix(out, a.out_path);
    if (a.check) {
        if (q.rows() > a.check_max_n) {
            std::cout << "check skipped: n = " << q.rows() << " exceeds guard "
                      << a.check_max_n << "\n";
            return kExitOk;
        }
        double err = attn::max_abs_diff(out, attn::exact_attention(q, k, v));
        std::cout << "max_abs_err " << err << " (eps " << a.eps << ")\n";
        if (a.algo != "exact" && err > a.eps) return kExitCheck;
    }
    return kExitOk;
}

// ---- bench ------------------------------------------------------------------

struct BenchArgs {
    std::string algo = "poly1d", json_path;
    std::vector<std::size_t> n_list;
    std::size_t d = 1;
    double b = 10.0, eps = 1e-2;
    std::size_t trials = 3;
    std::uint64_t seed = 1;
    std::size_t check_max_n = 4096;
    unsigned threads = 0;
};

int cmd_bench(const BenchArgs& a) {
    attn::set_threads(a.threads == 0 ? 1 : a.threads);
    json records = json::array();
    std::vector<double> ns, means;
    for (std::size_t n : a.n_list) {
        double total = 0.0;
        for (std::size_t trial = 0; trial < a.trials; ++trial) {
            attn::Rng rng(attn::mix64(a.seed) ^ attn::mix64(n * 1315423911ULL + trial));
            Matrix q = random_matrix(rng, n, a.d, a.b);
            Matrix k = random_matrix(rng, n, a.d, a.b);
            Matrix v = random_matrix(rng, n, a.d, a.b);
            attn::RunStats stats;
            attn::Timer t;
            Matrix out = run_algo(a.algo, q, k, v, a.eps, &stats);
            double wall = std::max(t.seconds(), 1e-9);
            total += wall;
            json rec{{"algo", a.algo},       {"n", n},
                     {"d", a.d},             {"B", a.b},
                     {"eps", a.eps},         {"trial", trial},
                     {"seed", a.seed},       {"wall_time_s", wall},
                     {"build_time_s", stats.prep_seconds},
                     {"query_time_s", stats.query_seconds > 0 ? stats.query_seconds : wall}};
            if (a.algo != "exact" && n <= a.check_max_n) {
                double err = attn::max_abs_diff(out, attn::exact_attention(q, k, v));
                rec["max_abs_err"] = err;
            }
            records.push_back(std::move(rec));
        }
        ns.push_back(static_cast<double>(n));
        means.push_back(total / static_cast<double>(a.trials));
    }
    json out{{"version", ATTN_VERSION},
             {"seed", a.seed},
             {"flags", flag_echo({{"algo", a.algo},
                                  {"d", a.d},
                                  {"B", a.b},
                                  {"eps", a.eps},
                                  {"trials", a.trials},
                                  {"n_list", a.n_list}})},
             {"records", records},
             {"summary",
              {{"algo", a.algo},
               {"exponent", ns.size() >= 2 ? attn::fit_loglog_exponent(ns, means) : 0.0}}}};
    if (a.json_path.empty()) {
        std::cout << out.dump(2) << "\n";
    } else {
        std::ofstream f(a.json_path);
        f << out.dump(2) << "\n";
        if (!f) throw std::runtime_error("cannot write '" + a.json_path + "'");
    }
    return kExitOk;
}

// ---- grad -------------------------------------------------------------------

struct GradArgs {
    std::string a1, a2, a3, e, y, x, oracle = "exact", out_path;
    double eps = 1e-3;
    bool check = false;
    std::size_t check_max_n = 512;
    unsigned threads = 0;
};

int cmd_grad(const GradArgs& a) {
    attn::set_threads(a.threads == 0 ? 1 : a.threads);
    Matrix a1 = attn::load_matrix(a.a1), a2 = attn::load_matrix(a.a2),
           a3 = attn::load_matrix(a.a3), e = attn::load_matrix(a.e), y = attn::load_matrix(a.y),
           x = attn::load_matrix(a.x);
    double bound = std::max({a1.max_abs(), a2.max_abs(), a3.max_abs(), e.max_abs(), y.max_abs(),
                             1e-6});
    attn::GradInstance inst(a1, a2, a3, e, y, x, bound, a.eps);
    attn::AttentionOracle inner =
        a.oracle == "polyd" ? attn::make_polyd_oracle() : attn::make_exact_oracle();
    attn::CountingOracle counter(std::move(inner));
    Matrix g = attn::approx_gradient(inst, counter.as_oracle());
    std::cout << "oracle_calls " << counter.calls() << " (d + 3 = " << inst.d() + 3 << ")\n";
    if (!a.out_path.empty()) attn::store_matrix(g, a.out_path);
    if (a.check) {
        if (inst.n() > a.check_max_n) {
            std::cout << "check skipped: n exceeds guard " << a.check_max_n << "\n";
            return kExitOk;
        }
        double err = attn::max_abs_diff(g, attn::exact_gradient(inst));
        std::cout << "max_abs_err " << err << " (eps " << a.eps << ")\n";
        if (err > a.eps) return kExitCheck;
    }
    return kExitOk;
}

// ---- reduce -----------------------------------------------------------------

struct ReduceArgs {
    std::string task, a_path, b_path, oracle = "exact", json_path;
    double eps = 0.1;
    std::uint64_t seed = 1;
    std::size_t rounds = 0;
    bool check = false;
    std::size_t check_max_n = 2048;
    unsigned threads = 0;
};

int cmd_reduce(const ReduceArgs& a) {
    attn::set_threads(a.threads == 0 ? 1 : a.threads);
    Matrix ma = attn::load_matrix(a.a_path);
    Matrix mb = attn::load_matrix(a.b_path);
    attn::AttentionOracle oracle =
        a.oracle == "polyd" ? attn::make_polyd_oracle() : attn::make_exact_oracle();

    json result;
    bool check_ok = true;
    const bool can_check = a.check && ma.rows() <= a.check_max_n;

    if (a.task == "rowsums") {
        attn::RowSumEstimate est = attn::estimate_row_sums(ma, mb, a.eps, oracle);
        result = {{"estimates", est.estimates}, {"rounds_used", est.rounds_used}, {"eps", est.eps}};
        if (can_check) {
            for (std::size_t i = 0; i < ma.rows(); ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < mb.rows(); ++j) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < ma.cols(); ++c) dot += ma(i, c) * mb(j, c);
                    s += std::exp(dot);
                }
                check_ok &= est.estimates[i] >= s * (1.0 - 4.0 * a.eps) &&
                            est.estimates[i] <= s * (1.0 + 4.0 * a.eps);
            }
        }
    } else if (a.task == "maxip") {
        double bound = std::max(ma.max_abs(), mb.max_abs());
        attn::VectorSet sa(ma, attn::EntryKind::kInteger, bound);
        attn::VectorSet sb(mb, attn::EntryKind::kInteger, bound);
        attn::MaxIpResult res = attn::max_ip(sa, sb, oracle);
        result = {{"per_row", res.per_row}, {"global_max", res.global}};
        if (can_check) {
            for (std::size_t i = 0; i < ma.rows(); ++i) {
                double best = -1e300;
                for (std::size_t j = 0; j < mb.rows(); ++j) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < ma.cols(); ++c) dot += ma(i, c) * mb(j, c);
                    best = std::max(best, dot);
                }
                check_ok &= res.per_row[i] == static_cast<long long>(std::llround(best));
            }
        }
    } else if (a.task == "ov-large" || a.task == "ov-parity") {
        attn::VectorSet sa(ma, attn::EntryKind::kBinary, 1.0);
        attn::VectorSet sb(mb, attn::EntryKind::kBinary, 1.0);
        bool ans = a.task == "ov-large"
                       ? attn::ov_large_entries(sa, sb, oracle)
                       : attn::ov_parity(sa, sb, oracle, a.seed, a.rounds);
        result = {{"orthogonal_pair", ans}};
        if (can_check) {
            bool want = false;
            for (std::size_t i = 0; i < ma.rows() && !want; ++i)
                for (std::size_t j = 0; j < mb.rows() && !want; ++j) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < ma.cols(); ++c) dot += ma(i, c) * mb(j, c);
                    want = dot == 0.0;
                }
            check_ok &= ans == want;
        }
    } else {
        throw CLI::ValidationError("unknown --task '" + a.task + "'");
    }

    json out{{"version", ATTN_VERSION},
             {"seed", a.seed},
             {"task", a.task},
             {"flags", flag_echo({{"oracle", a.oracle}, {"eps", a.eps}, {"rounds", a.rounds}})},
             {"result", result}};
    if (a.check) out["check"] = {{"ran", can_check}, {"ok", check_ok}};
    if (a.json_path.empty()) {
        std::cout << out.dump(2) << "\n";
    } else {
        std::ofstream f(a.json_path);
        f << out.dump(2) << "\n";
    }
    return a.check && can_check && !check_ok ? kExitCheck : kExitOk;
}

// ---- gen --------------------------------------------------------------------

struct GenArgs {
    std::string kind = "matrix", out_path;
    std::size_t n = 64, d = 2;
    double b = 1.0;
    std::uint64_t seed = 1;
};

int cmd_gen(const GenArgs& a) {
    attn::Rng rng(a.seed);
    Matrix m = a.kind == "binary" ? random_binary(rng, a.n, a.d)
                                  : random_matrix(rng, a.n, a.d, a.b);
    attn::store_matrix(m, a.out_path);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"subquadratic attention toolkit"};
    app.set_version_flag("--version", ATTN_VERSION);
    app.require_subcommand(1);

    AttnArgs attn_args;
    auto* attn_cmd = app.add_subcommand("attn", "compute attention on CSV matrices");
    attn_cmd->add_option("--algo", attn_args.algo)
        ->check(CLI::IsMember({"exact", "round1d", "poly1d", "polyd", "lowrank"}));
    attn_cmd->add_option("--q", attn_args.q_path)->required();
    attn_cmd->add_option("--k", attn_args.k_path)->required();
    attn_cmd->add_option("--v", attn_args.v_path)->required();
    attn_cmd->add_option("--eps", attn_args.eps);
    attn_cmd->add_option("--out", attn_args.out_path);
    attn_cmd->add_flag("--check", attn_args.check, "compare against the exact oracle");
    attn_cmd->add_option("--check-max-n", attn_args.check_max_n);
    attn_cmd->add_option("--threads", attn_args.threads);

    BenchArgs bench_args;
    auto* bench_cmd = app.add_subcommand("bench", "runtime scaling benchmark");
    bench_cmd->add_option("--algo", bench_args.algo)
        ->check(CLI::IsMember({"exact", "round1d", "poly1d", "polyd", "lowrank"}));
    bench_cmd->add_option("--n-list", bench_args.n_list)->required()->delimiter(',');
    bench_cmd->add_option("--d", bench_args.d);
    bench_cmd->add_option("--B", bench_args.b);
    bench_cmd->add_option("--eps", bench_args.eps);
    bench_cmd->add_option("--trials", bench_args.trials);
    bench_cmd->add_option("--seed", bench_args.seed);
    bench_cmd->add_option("--json", bench_args.json_path);
    bench_cmd->add_option("--check-max-n", bench_args.check_max_n);
    bench_cmd->add_option("--threads", bench_args.threads);

    GradArgs grad_args;
    auto* grad_cmd = app.add_subcommand("grad", "attention-loss gradient via oracle calls");
    grad_cmd->add_option("--a1", grad_args.a1)->required();
    grad_cmd->add_option("--a2", grad_args.a2)->required();
    grad_cmd->add_option("--a3", grad_args.a3)->required();
    grad_cmd->add_option("--e", grad_args.e)->required();
    grad_cmd->add_option("--y", grad_args.y)->required();
    grad_cmd->add_option("--x", grad_args.x)->required();
    grad_cmd->add_option("--eps", grad_args.eps);
    grad_cmd->add_option("--oracle", grad_args.oracle)->check(CLI::IsMember({"exact", "polyd"}));
    grad_cmd->add_option("--out", grad_args.out_path);
    grad_cmd->add_flag("--check", grad_args.check);
    grad_cmd->add_option("--check-max-n", grad_args.check_max_n);
    grad_cmd->add_option("--threads", grad_args.threads);

    ReduceArgs reduce_args;
    auto* reduce_cmd = app.add_subcommand("reduce", "attention-oracle reductions");
    reduce_cmd->add_option("--task", reduce_args.task)
        ->required()
        ->check(CLI::IsMember({"maxip", "ov-large", "ov-parity", "rowsums"}));
    reduce_cmd->add_option("--a", reduce_args.a_path)->required();
    reduce_cmd->add_option("--b", reduce_args.b_path)->required();
    reduce_cmd->add_option("--oracle", reduce_args.oracle)
        ->check(CLI::IsMember({"exact", "polyd"}));
    reduce_cmd->add_option("--eps", reduce_args.eps);
    reduce_cmd->add_option("--seed", reduce_args.seed);
    reduce_cmd->add_option("--rounds", reduce_args.rounds);
    reduce_cmd->add_option("--json", reduce_args.json_path);
    reduce_cmd->add_flag("--check", reduce_args.check);
    reduce_cmd->add_option("--check-max-n", reduce_args.check_max_n);
    reduce_cmd->add_option("--threads", reduce_args.threads);

    GenArgs gen_args;
    auto* gen_cmd = app.add_subcommand("gen", "generate random CSV fixtures");
    gen_cmd->add_option("--kind", gen_args.kind)->check(CLI::IsMember({"matrix", "binary"}));
    gen_cmd->add_option("--n", gen_args.n);
    gen_cmd->add_option("--d", gen_args.d);
    gen_cmd->add_option("--B", gen_args.b);
    gen_cmd->add_option("--seed", gen_args.seed);
    gen_cmd->add_option("--out", gen_args.out_path)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (attn_cmd->parsed()) return guarded([&] { return cmd_attn(attn_args); });
    if (bench_cmd->parsed()) return guarded([&] { return cmd_bench(bench_args); });
    if (grad_cmd->parsed()) return guarded([&] { return cmd_grad(grad_args); });
    if (reduce_cmd->parsed()) return guarded([&] { return cmd_reduce(reduce_args); });
    if (gen_cmd->parsed()) return guarded([&] { return cmd_gen(gen_args); });
    return kExitUsage;
}
