#pragma once

// Experiment orchestration: deterministic seeding, parallel Monte Carlo over
// (N, draw) work items, crash-safe persistence with resume, and report
// emission (raw CSV, aggregate CSV, JSON summary, plot data).
//
// Reproducibility contract: the stream for work item (N, draw) depends only
// on the master seed, so results are independent of execution order and of
// the worker count, and a finished run rewrites its raw CSV in sorted order;
// identical configs give byte-identical outputs.

#include <atomic>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "qelab/config.hpp"
#include "qelab/ensembles.hpp"
#include "qelab/errors.hpp"
#include "qelab/io.hpp"
#include "qelab/linalg.hpp"
#include "qelab/oracle.hpp"
#include "qelab/qe_stats.hpp"
#include "qelab/rng.hpp"
#include "qelab/sphere.hpp"

namespace qelab::runner {

using cplx = std::complex<double>;
namespace fs = std::filesystem;

enum class ExperimentKind { Qe, Normality, Que, Weingarten };

inline std::string kind_name(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::Qe: return "qe";
        case ExperimentKind::Normality: return "normality";
        case ExperimentKind::Que: return "que";
        case ExperimentKind::Weingarten: return "weingarten";
    }
    return "?";
}

inline ExperimentKind kind_from_name(const std::string& s) {
    if (s == "qe") return ExperimentKind::Qe;
    if (s == "normality") return ExperimentKind::Normality;
    if (s == "que") return ExperimentKind::Que;
    if (s == "weingarten") return ExperimentKind::Weingarten;
    throw validation_error("unknown experiment kind '" + s + "'");
}

enum class OperatorFamilyKind { DiagonalSymbol, Multiplication };

struct OperatorSpec {
    OperatorFamilyKind family = OperatorFamilyKind::DiagonalSymbol;
    std::string generator = "s";
    double param = 0.0;
    int band_limit = 0;  // W_n columns span |n| <= band_limit
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::Qe;
    std::uint64_t master_seed = 42;
    fs::path out_dir;
    int workers = 1;
    long draws = 1;

    ensembles::EntryLaw law = ensembles::EntryLaw::ComplexGaussian;
    ensembles::ProfileKind profile = ensembles::ProfileKind::Flat;
    std::vector<double> profile_params;
    double c1 = 4.0;
    double c2 = 0.25;

    OperatorSpec op;

    std::vector<int> n_list;
    double nu = 0.25;

    // normality
    std::string scaling = "dN";  // sqrt(2 d_N) vs sqrt(4 N) sample scaling
    int pairs = 8;

    // que
    std::vector<int> supports;
    std::vector<double> deltas;

    // weingarten
    std::vector<int> d_list;
    long mc_draws = 20000;

    // optional pass/fail thresholds for the JSON summary
    std::optional<double> slope_max, slope_x2_max, r2_min, gap_slope_max;

    ConfigMap raw;
};

// Science keys only: output location and worker count do not affect results.
inline std::string science_hash(const ConfigMap& cfg) {
    ConfigMap c = cfg;
    c.set("experiment.out", "");
    c.set("experiment.workers", "");
    return c.hash_hex();
}

inline ensembles::EntryLaw law_from_name(const std::string& s) {
    if (s == "complex-gaussian") return ensembles::EntryLaw::ComplexGaussian;
    if (s == "complex-rademacher") return ensembles::EntryLaw::ComplexRademacher;
    if (s == "complex-uniform") return ensembles::EntryLaw::ComplexUniform;
    throw validation_error("unknown entry law '" + s + "'");
}

inline ensembles::ProfileKind profile_from_name(const std::string& s) {
    if (s == "flat") return ensembles::ProfileKind::Flat;
    if (s == "banded") return ensembles::ProfileKind::Banded;
    if (s == "two-block") return ensembles::ProfileKind::TwoBlock;
    throw validation_error("unknown variance profile '" + s + "'");
}

inline std::function<double(double)> diagonal_generator(const std::string& name) {
    if (name == "one") return [](double) { return 1.0; };
    if (name == "s") return [](double s) { return s; };
    if (name == "s2") return [](double s) { return s * s; };
    if (name == "cos_pi_s") return [](double s) { return std::cos(std::numbers::pi * s); };
    throw validation_error("unknown diagonal generator '" + name + "'");
}

inline sphere::SphereFunction sphere_generator(const std::string& name, double param) {
    if (name == "one") return {[](double, double) { return 1.0; }, 0, name};
    if (name == "cos_theta") return {[](double x, double) { return x; }, 0, name};
    if (name == "sin_theta_cos_phi")
        return {[](double x, double p) { return std::sqrt(std::max(0.0, 1.0 - x * x)) * std::cos(p); }, 1, name};
    if (name == "cos_theta_cos_phi") return {[](double x, double p) { return x * std::cos(p); }, 1, name};
    if (name == "phi_bump") {
        double kappa = param > 0.0 ? param : 8.0;
        int band = static_cast<int>(std::ceil(kappa)) + 24;
        return {[kappa](double, double p) { return std::exp(kappa * (std::cos(p) - 1.0)); }, band, name};
    }
    throw validation_error("unknown multiplication generator '" + name + "'");
}

inline ExperimentConfig resolve_config(const ConfigMap& cfg) {
    ExperimentConfig out;
    out.raw = cfg;
    out.kind = kind_from_name(cfg.get_or("experiment.kind", "qe"));
    out.master_seed = static_cast<std::uint64_t>(cfg.get_int_or("experiment.seed", 42));
    out.workers = static_cast<int>(cfg.get_int_or("experiment.workers", 1));
    out.draws = cfg.get_int_or("experiment.draws", 1);
    std::string out_dir = cfg.get_or("experiment.out", "");
    if (out_dir.empty()) {
        const char* env = std::getenv("QELAB_OUT");
        out_dir = (env && *env) ? env : "qelab_out";
    }
    out.out_dir = out_dir;
    if (out.workers < 1) throw validation_error("config: workers must be >= 1");
    if (out.draws < 1) throw validation_error("config: draws must be >= 1");

    out.law = law_from_name(cfg.get_or("ensemble.law", "complex-gaussian"));
    out.profile = profile_from_name(cfg.get_or("ensemble.profile", "flat"));
    if (cfg.has("ensemble.profile_params")) out.profile_params = cfg.get_double_list("ensemble.profile_params");
    out.c1 = cfg.get_double_or("ensemble.c1", 4.0);
    out.c2 = cfg.get_double_or("ensemble.c2", 0.25);

    std::string family = cfg.get_or("operator.family", "diagonal-symbol");
    if (family == "diagonal-symbol")
        out.op.family = OperatorFamilyKind::DiagonalSymbol;
    else if (family == "multiplication")
        out.op.family = OperatorFamilyKind::Multiplication;
    else
        throw validation_error("unknown operator family '" + family + "'");
    out.op.generator = cfg.get_or("operator.generator", "s");
    out.op.param = cfg.get_double_or("operator.param", 0.0);
    if (out.op.family == OperatorFamilyKind::Multiplication)
        out.op.band_limit = static_cast<int>(
            cfg.get_int_or("operator.band_limit", sphere_generator(out.op.generator, out.op.param).band_limit));
    else
        out.op.band_limit = static_cast<int>(cfg.get_int_or("operator.band_limit", 0));
    if (out.op.band_limit < 0) throw validation_error("config: band_limit must be >= 0");

    if (cfg.has("experiment.N_list")) {
        for (long long n : cfg.get_int_list("experiment.N_list")) {
            if (n < 0) throw validation_error("config: N_list entries must be >= 0");
            if (!out.n_list.empty() && n <= out.n_list.back())
                throw validation_error("config: N_list must be strictly increasing");
            out.n_list.push_back(static_cast<int>(n));
        }
    }
    out.nu = cfg.get_double_or("experiment.nu", 0.25);
    if (!(out.nu > 0.0 && out.nu < 0.75)) throw validation_error("config: nu must lie in (0, 3/4)");

    out.scaling = cfg.get_or("normality.scaling", "dN");
    if (out.scaling != "dN" && out.scaling != "2N")
        throw validation_error("config: normality.scaling must be 'dN' or '2N'");
    out.pairs = static_cast<int>(cfg.get_int_or("normality.pairs", 8));
    if (out.pairs < 1) throw validation_error("config: normality.pairs must be >= 1");

    if (cfg.has("que.supports"))
        for (long long s : cfg.get_int_list("que.supports")) {
            if (s < 2 || s % 2 != 0) throw validation_error("config: que supports must be even and >= 2");
            out.supports.push_back(static_cast<int>(s));
        }
    if (cfg.has("que.deltas")) out.deltas = cfg.get_double_list("que.deltas");
    for (double dl : out.deltas)
        if (!(dl > 0.0)) throw validation_error("config: que deltas must be positive");

    if (cfg.has("weingarten.d_list"))
        for (long long d : cfg.get_int_list("weingarten.d_list")) {
            if (d < 4) throw validation_error("config: weingarten dimensions must be >= 4");
            out.d_list.push_back(static_cast<int>(d));
        }
    out.mc_draws = cfg.get_int_or("weingarten.mc_draws", 20000);
    if (out.mc_draws < 1000) throw validation_error("config: weingarten.mc_draws must be >= 10^3");

    if (cfg.has("thresholds.slope_max")) out.slope_max = cfg.get_double("thresholds.slope_max");
    if (cfg.has("thresholds.slope_x2_max")) out.slope_x2_max = cfg.get_double("thresholds.slope_x2_max");
    if (cfg.has("thresholds.r2_min")) out.r2_min = cfg.get_double("thresholds.r2_min");
    if (cfg.has("thresholds.gap_slope_max")) out.gap_slope_max = cfg.get_double("thresholds.gap_slope_max");

    switch (out.kind) {
        case ExperimentKind::Qe:
        case ExperimentKind::Normality:
        case ExperimentKind::Que:
            if (out.n_list.empty()) throw validation_error("config: experiment.N_list is required");
            break;
        case ExperimentKind::Weingarten:
            if (out.d_list.empty()) throw validation_error("config: weingarten.d_list is required");
            break;
    }
    if (out.kind == ExperimentKind::Que) {
        if (out.supports.empty()) throw validation_error("config: que.supports is required");
        if (out.deltas.empty()) throw validation_error("config: que.deltas is required");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Row records (one line of raw.csv each) and aggregates.

struct NormalityRow {
    int N = 0;
    long draw = 0;
    long n_samples = 0;
    cplx q1{0.0, 0.0};   // per-draw mean of the Q1 pattern
    cplx unb{0.0, 0.0};  // per-draw mean of the conjugation-unbalanced pattern
};

struct QueRow {
    int N = 0;
    long draw = 0;
    long n_k = 0;                 // samples per draw (|T|)
    std::vector<long> exceed;     // support-major, delta-minor counts
};

struct WeingartenRow {
    std::string pattern;
    int m = 0;
    int d = 0;
    double exact = 0.0;    // Dirichlet value
    double leading = 0.0;  // leading Weingarten term
    cplx mc{0.0, 0.0};
    double mc_se = 0.0;
    long draws = 0;
};

struct QeAggregateRow {
    int N = 0;
    int d = 0;
    long draws = 0;
    double mean_x = 0.0, se_x = 0.0;
    double mean_x2 = 0.0, se_x2 = 0.0;
    double var_x = 0.0;  // feeds the Kolmogorov partial sums
    std::optional<double> mean_z, se_z, haar_z;
    std::optional<double> cesaro, kolmogorov;
};

struct NormalityAggRow {
    int N = 0;
    int d = 0;
    long draws = 0;
    double emp = 0.0;     // Re of the pooled Q1 estimate
    double se = 0.0;
    double target = 0.0;  // Wick value
    double gap = 0.0;     // |emp - target|
    double unb_abs = 0.0;
    double unb_se = 0.0;
};

struct QueAggRow {
    int N = 0;
    int d = 0;
    int support = 0;
    double delta = 0.0;
    double tail = 0.0;
    long samples = 0;
};

struct RunRecord {
    ExperimentConfig cfg;
    std::string config_hash;
    double wall_seconds = 0.0;

    std::vector<stats::QEReport> qe_rows;
    std::vector<NormalityRow> normality_rows;
    std::vector<QueRow> que_rows;
    std::vector<WeingartenRow> weingarten_rows;

    std::vector<QeAggregateRow> qe_agg;
    std::optional<stats::LogLogFit> fit_x, fit_x2, fit_anchor, fit_gap;
    std::vector<NormalityAggRow> normality_agg;
    std::vector<QueAggRow> que_agg;
};

// ---------------------------------------------------------------------------
// Shared helpers.

namespace detail {

inline void parallel_for(int workers, std::size_t n, const std::function<void(std::size_t)>& body) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto worker = [&]() {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    int count = std::min<std::size_t>(workers, n);
    pool.reserve(count);
    for (int w = 0; w < count; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

inline ensembles::WignerEnsembleSpec ensemble_for(const ExperimentConfig& cfg, int d) {
    ensembles::WignerEnsembleSpec spec;
    spec.law = cfg.law;
    spec.c1 = cfg.c1;
    spec.c2 = cfg.c2;
    spec.profile = ensembles::make_profile(cfg.profile, d, cfg.profile_params, cfg.c1);
    return spec;
}

// Evenly spread distinct storage indices in [0, d).
inline std::vector<int> spread_indices(int count, int d) {
    std::vector<int> idx(count);
    for (int j = 0; j < count; ++j)
        idx[j] = static_cast<int>((static_cast<long long>(j) * d + d / 2) / count) % d;
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    if (static_cast<int>(idx.size()) != count)
        throw validation_error("spread_indices: dimension too small for " + std::to_string(count) +
                               " distinct indices");
    return idx;
}

inline linalg::EigenDecomposition checked_eig(const linalg::HermitianMatrix& h, int n, long draw) {
    auto eig = linalg::hermitian_eig(h, h.dim() > 96 ? linalg::ResidualCheck::Spot
                                                     : linalg::ResidualCheck::Full);
    double scale = std::max(std::abs(eig.eigenvalues.front()), std::abs(eig.eigenvalues.back()));
    if (!(eig.residual <= 1e-8 * std::max(scale, 1e-300)))
        throw numeric_error("eigensolver residual out of tolerance at (N=" + std::to_string(n) +
                            ", draw=" + std::to_string(draw) + ")");
    return eig;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_csv(const fs::path& path) {
    CsvTable t;
    std::ifstream in(path);
    if (!in) return t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = io::split(line, ',');
        if (first) {
            t.header = cells;
            first = false;
        } else {
            t.rows.push_back(cells);
        }
    }
    return t;
}

inline std::string opt_cell(const std::optional<double>& v) {
    return v ? io::format_double(*v) : std::string();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Raw CSV schemas.

inline std::vector<std::string> qe_header(const ExperimentConfig& cfg) {
    std::vector<std::string> h = {"N", "draw", "X", "Z", "S1", "S2", "T1", "T2", "T3", "T4", "T5"};
    for (int n = -cfg.op.band_limit; n <= cfg.op.band_limit; ++n)
        h.push_back("W_" + std::to_string(n));
    return h;
}

inline std::vector<std::string> qe_row_cells(const ExperimentConfig& cfg, const stats::QEReport& r) {
    std::vector<std::string> c;
    c.push_back(std::to_string(r.N));
    c.push_back(std::to_string(r.draw));
    c.push_back(io::format_double(r.X));
    if (r.has_rotinv) {
        c.push_back(io::format_double(r.rotinv.Z));
        c.push_back(io::format_double(r.rotinv.S1));
        c.push_back(io::format_double(r.rotinv.S2));
        c.push_back(io::format_double(r.rotinv.T1));
        c.push_back(io::format_double(r.rotinv.T2));
        c.push_back(io::format_double(r.rotinv.T3));
        c.push_back(io::format_double(r.rotinv.T4));
        c.push_back(io::format_double(r.rotinv.T5));
    } else {
        for (int i = 0; i < 8; ++i) c.emplace_back();
    }
    for (int n = -cfg.op.band_limit; n <= cfg.op.band_limit; ++n)
        c.push_back(io::format_double(r.W[n + cfg.op.band_limit]));
    return c;
}

inline stats::QEReport qe_row_parse(const ExperimentConfig& cfg, const std::vector<std::string>& cells) {
    const std::size_t expect = 11 + 2 * cfg.op.band_limit + 1;
    if (cells.size() != expect) throw numeric_error("raw.csv: qe row has wrong column count");
    stats::QEReport r;
    r.N = static_cast<int>(io::parse_int(cells[0]));
    r.draw = io::parse_int(cells[1]);
    r.X = io::parse_double(cells[2]);
    r.has_rotinv = !cells[3].empty();
    if (r.has_rotinv) {
        r.rotinv.Z = io::parse_double(cells[3]);
        r.rotinv.S1 = io::parse_double(cells[4]);
        r.rotinv.S2 = io::parse_double(cells[5]);
        r.rotinv.T1 = io::parse_double(cells[6]);
        r.rotinv.T2 = io::parse_double(cells[7]);
        r.rotinv.T3 = io::parse_double(cells[8]);
        r.rotinv.T4 = io::parse_double(cells[9]);
        r.rotinv.T5 = io::parse_double(cells[10]);
    }
    r.band_limit = cfg.op.band_limit;
    r.W.resize(2 * cfg.op.band_limit + 1);
    for (int n = 0; n <= 2 * cfg.op.band_limit; ++n) r.W[n] = io::parse_double(cells[11 + n]);
    return r;
}

// ---------------------------------------------------------------------------
// Persistence with resume.

namespace detail {

template <typename Row>
class RowStore {
public:
    RowStore(fs::path dir, std::vector<std::string> header,
             std::function<std::vector<std::string>(const Row&)> serialize,
             std::function<Row(const std::vector<std::string>&)> parse)
        : dir_(std::move(dir)),
          header_(std::move(header)),
          serialize_(std::move(serialize)),
          parse_(std::move(parse)) {}

    fs::path raw_path() const { return dir_ / "raw.csv"; }
    fs::path partial_path() const { return dir_ / "raw.partial.csv"; }

    // Loads rows persisted by an earlier (possibly interrupted) run.
    std::map<std::pair<int, long>, Row> load_existing(
        const std::function<std::pair<int, long>(const Row&)>& key) const {
        std::map<std::pair<int, long>, Row> out;
        for (const fs::path& p : {raw_path(), partial_path()}) {
            CsvTable t = read_csv(p);
            if (t.header.empty()) continue;
            if (t.header != header_)
                throw numeric_error("resume: header of " + p.string() + " does not match this config");
            for (const auto& cells : t.rows) {
                Row r = parse_(cells);
                out[key(r)] = r;
            }
        }
        return out;
    }

    void open_partial() {
        partial_.open(partial_path(), std::ios::app);
        if (!partial_) throw validation_error("cannot open " + partial_path().string());
        if (fs::file_size(partial_path()) == 0) {
            partial_ << join(header_) << "\n";
            partial_.flush();
        }
    }

    void append(const Row& r) {
        std::lock_guard<std::mutex> lock(mutex_);
        partial_ << join(serialize_(r)) << "\n";
        partial_.flush();
    }

    // Canonical sorted rewrite; removes the partial journal.
    void finalize(std::vector<Row> rows) {
        if (partial_.is_open()) partial_.close();
        std::ofstream out(raw_path(), std::ios::trunc);
        if (!out) throw validation_error("cannot write " + raw_path().string());
        out << join(header_) << "\n";
        for (const Row& r : rows) out << join(serialize_(r)) << "\n";
        out.close();
        std::error_code ec;
        fs::remove(partial_path(), ec);
    }

private:
    static std::string join(const std::vector<std::string>& cells) {
        std::string out;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out.push_back(',');
            out += cells[i];
        }
        return out;
    }

    fs::path dir_;
    std::vector<std::string> header_;
    std::function<std::vector<std::string>(const Row&)> serialize_;
    std::function<Row(const std::vector<std::string>&)> parse_;
    std::ofstream partial_;
    std::mutex mutex_;
};

// Runs the (N, draw) grid with resume: existing rows are kept, missing ones
// are computed in parallel, and the final raw.csv is rewritten sorted.
template <typename Row>
std::vector<Row> run_grid(const ExperimentConfig& cfg, RowStore<Row>& store,
                          const std::function<Row(int, long)>& compute) {
    auto key = [](const Row& r) { return std::make_pair(r.N, r.draw); };
    std::map<std::pair<int, long>, Row> have = store.load_existing(key);

    std::vector<std::pair<int, long>> missing;
    for (int n : cfg.n_list)
        for (long draw = 0; draw < cfg.draws; ++draw)
            if (!have.count({n, draw})) missing.emplace_back(n, draw);

    if (!missing.empty()) {
        store.open_partial();
        std::mutex merge_mutex;
        parallel_for(cfg.workers, missing.size(), [&](std::size_t i) {
            auto [n, draw] = missing[i];
            Row r = compute(n, draw);
            store.append(r);
            std::lock_guard<std::mutex> lock(merge_mutex);
            have[{n, draw}] = std::move(r);
        });
    }

    std::vector<Row> rows;
    rows.reserve(have.size());
    for (auto& [k, r] : have) rows.push_back(std::move(r));
    store.finalize(rows);
    return rows;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Experiment bodies.

namespace detail {

inline sphere::OperatorBlock build_block(const ExperimentConfig& cfg, int n,
                                         const sphere::SphericalGrid* grid) {
    if (cfg.op.family == OperatorFamilyKind::DiagonalSymbol)
        return sphere::diagonal_symbol_block(diagonal_generator(cfg.op.generator), n);
    sphere::SphereFunction f = sphere_generator(cfg.op.generator, cfg.op.param);
    return sphere::mult_operator_block(f, n, *grid);
}

inline void aggregate_qe(const ExperimentConfig& cfg, RunRecord& rec) {
    rec.qe_agg.clear();
    std::map<int, std::vector<const stats::QEReport*>> by_n;
    for (const auto& r : rec.qe_rows) by_n[r.N].push_back(&r);

    const bool diagonal_op = cfg.op.family == OperatorFamilyKind::DiagonalSymbol;
    for (int n : cfg.n_list) {
        auto it = by_n.find(n);
        if (it == by_n.end()) continue;
        const auto& rows = it->second;
        QeAggregateRow a;
        a.N = n;
        a.d = 2 * n + 1;
        a.draws = static_cast<long>(rows.size());
        double sx = 0.0, sx2 = 0.0, sx_sq = 0.0, sx2_sq = 0.0, sz = 0.0, sz_sq = 0.0;
        for (const auto* r : rows) {
            sx += r->X;
            sx_sq += r->X * r->X;
            double x2 = r->X * r->X;
            sx2 += x2;
            sx2_sq += x2 * x2;
            if (r->has_rotinv) {
                sz += r->rotinv.Z;
                sz_sq += r->rotinv.Z * r->rotinv.Z;
            }
        }
        const double m = static_cast<double>(rows.size());
        a.mean_x = sx / m;
        a.mean_x2 = sx2 / m;
        double vx = std::max(0.0, sx_sq / m - a.mean_x * a.mean_x);
        double vx2 = std::max(0.0, sx2_sq / m - a.mean_x2 * a.mean_x2);
        a.se_x = std::sqrt(vx / m);
        a.se_x2 = std::sqrt(vx2 / m);
        // One draw cannot estimate a variance; fall back to the second
        // moment, which still witnesses the summability the Kolmogorov
        // criterion needs (Var X <= E X^2).
        a.var_x = rows.size() >= 2 ? vx * m / (m - 1.0) : a.mean_x2;
        if (diagonal_op && rows.front()->has_rotinv) {
            a.mean_z = sz / m;
            a.se_z = std::sqrt(std::max(0.0, sz_sq / m - *a.mean_z * *a.mean_z) / m);
            std::vector<double> diag(a.d);
            sphere::OperatorBlock blk = build_block(cfg, n, nullptr);
            for (int al = -n; al <= n; ++al) diag[al + n] = blk.elem(al, al).real();
            a.haar_z = oracle::haar_expected_z(diag, blk.omega, stats::build_index_set(n, cfg.nu).size());
        }
        rec.qe_agg.push_back(std::move(a));
    }

    // Cesaro / Kolmogorov sequences exist when N_list is 0..M consecutively.
    bool consecutive = !cfg.n_list.empty() && cfg.n_list.front() == 0;
    for (std::size_t i = 1; consecutive && i < cfg.n_list.size(); ++i)
        consecutive = cfg.n_list[i] == cfg.n_list[i - 1] + 1;
    if (consecutive && rec.qe_agg.size() == cfg.n_list.size()) {
        std::vector<double> means, vars;
        for (const auto& a : rec.qe_agg) {
            means.push_back(a.mean_x);
            vars.push_back(a.var_x);
        }
        auto agg = stats::aggregate_series(means, vars);
        for (std::size_t i = 0; i < rec.qe_agg.size(); ++i) {
            rec.qe_agg[i].cesaro = agg.cesaro[i];
            rec.qe_agg[i].kolmogorov = agg.kolmogorov_partials[i];
        }
    }

    auto fit_of = [&](auto value_of) -> std::optional<stats::LogLogFit> {
        std::vector<std::pair<double, double>> pairs;
        for (const auto& a : rec.qe_agg) {
            std::optional<double> v = value_of(a);
            if (v && *v > 0.0) pairs.emplace_back(a.d, *v);
        }
        if (pairs.size() < 3) return std::nullopt;
        return stats::loglog_fit(pairs);
    };
    rec.fit_x = fit_of([](const QeAggregateRow& a) { return std::optional<double>(a.mean_x); });
    rec.fit_x2 = fit_of([](const QeAggregateRow& a) { return std::optional<double>(a.mean_x2); });
    rec.fit_anchor = fit_of([](const QeAggregateRow& a) { return a.haar_z; });
}

inline void run_qe(const ExperimentConfig& cfg, RunRecord& rec) {
    std::optional<sphere::SphericalGrid> grid;
    if (cfg.op.family == OperatorFamilyKind::Multiplication) {
        int band = sphere_generator(cfg.op.generator, cfg.op.param).band_limit;
        grid.emplace(sphere::build_grid(cfg.n_list.back(), band));
    }

    // Per-N context, built once.
    std::map<int, sphere::OperatorBlock> blocks;
    std::map<int, stats::IndexSetT> sets;
    for (int n : cfg.n_list) {
        blocks.emplace(n, detail::build_block(cfg, n, grid ? &*grid : nullptr));
        sets.emplace(n, stats::build_index_set(n, cfg.nu));
    }

    detail::RowStore<stats::QEReport> store(
        cfg.out_dir, qe_header(cfg),
        [&cfg](const stats::QEReport& r) { return qe_row_cells(cfg, r); },
        [&cfg](const std::vector<std::string>& cells) { return qe_row_parse(cfg, cells); });

    rec.qe_rows = detail::run_grid<stats::QEReport>(cfg, store, [&](int n, long draw) {
        const int d = 2 * n + 1;
        RngStream rng = RngStream::derive(cfg.master_seed, static_cast<std::uint64_t>(n),
                                          static_cast<std::uint64_t>(draw));
        auto spec = detail::ensemble_for(cfg, d);
        auto h = ensembles::sample_wigner(spec, d, rng);
        auto eig = detail::checked_eig(h, n, draw);
        const auto& block = blocks.at(n);
        const auto& t = sets.at(n);

        stats::QEReport r;
        r.N = n;
        r.draw = draw;
        r.X = stats::qe_statistic(block, eig.vectors, t);
        r.band_limit = cfg.op.band_limit;
        r.W.resize(2 * cfg.op.band_limit + 1, 0.0);
        for (int band = -cfg.op.band_limit; band <= cfg.op.band_limit; ++band)
            r.W[band + cfg.op.band_limit] = stats::band_statistic(block, eig.vectors, t, band);
        if (block.is_diagonal()) {
            r.has_rotinv = true;
            r.rotinv = stats::rotinv_decomposition(block, eig.vectors, t);
        }
        return r;
    });

    aggregate_qe(cfg, rec);
}

inline std::vector<std::string> normality_header() {
    return {"N", "draw", "n", "q1_re", "q1_im", "unb_re", "unb_im"};
}

inline std::vector<std::string> normality_row_cells(const NormalityRow& r) {
    return {std::to_string(r.N),
            std::to_string(r.draw),
            std::to_string(r.n_samples),
            io::format_double(r.q1.real()),
            io::format_double(r.q1.imag()),
            io::format_double(r.unb.real()),
            io::format_double(r.unb.imag())};
}

inline NormalityRow normality_row_parse(const std::vector<std::string>& c) {
    if (c.size() != 7) throw numeric_error("raw.csv: normality row has wrong column count");
    NormalityRow r;
    r.N = static_cast<int>(io::parse_int(c[0]));
    r.draw = io::parse_int(c[1]);
    r.n_samples = io::parse_int(c[2]);
    r.q1 = {io::parse_double(c[3]), io::parse_double(c[4])};
    r.unb = {io::parse_double(c[5]), io::parse_double(c[6])};
    return r;
}

inline void aggregate_normality(const ExperimentConfig& cfg, RunRecord& rec) {
    oracle::MomentPattern q1;
    q1.z = {{0, 0}, {0, 1}};
    q1.zbar = {{0, 0}, {0, 1}};
    const double target = oracle::wick_moment(q1);

    rec.normality_agg.clear();
    std::map<int, std::vector<const NormalityRow*>> by_n;
    for (const auto& r : rec.normality_rows) by_n[r.N].push_back(&r);
    for (int n : cfg.n_list) {
        auto it = by_n.find(n);
        if (it == by_n.end()) continue;
        const auto& rows = it->second;
        NormalityAggRow a;
        a.N = n;
        a.d = 2 * n + 1;
        a.draws = static_cast<long>(rows.size());
        cplx sum(0.0, 0.0), usum(0.0, 0.0);
        double sq = 0.0, usq = 0.0;
        for (const auto* r : rows) {
            sum += r->q1;
            sq += r->q1.real() * r->q1.real();
            usum += r->unb;
            usq += std::norm(r->unb);
        }
        const double m = static_cast<double>(rows.size());
        cplx mean = sum / m;
        a.emp = mean.real();
        a.se = std::sqrt(std::max(0.0, sq / m - mean.real() * mean.real()) / m);
        a.target = target;
        a.gap = std::abs(a.emp - target);
        cplx umean = usum / m;
        a.unb_abs = std::abs(umean);
        a.unb_se = std::sqrt(std::max(0.0, usq / m - std::norm(umean)) / m);
        rec.normality_agg.push_back(a);
    }

    rec.fit_gap.reset();
    std::vector<std::pair<double, double>> pairs;
    for (const auto& a : rec.normality_agg)
        if (a.gap > 0.0) pairs.emplace_back(a.d, a.gap);
    if (pairs.size() >= 3) rec.fit_gap = stats::loglog_fit(pairs);
}

inline void run_normality(const ExperimentConfig& cfg, RunRecord& rec) {
    detail::RowStore<NormalityRow> store(
        cfg.out_dir, normality_header(),
        [](const NormalityRow& r) { return normality_row_cells(r); },
        [](const std::vector<std::string>& c) { return normality_row_parse(c); });

    std::map<int, stats::IndexSetT> sets;
    std::map<int, std::vector<int>> pair_indices;
    for (int n : cfg.n_list) {
        const int d = 2 * n + 1;
        if (2 * cfg.pairs > d)
            throw validation_error("normality: dimension " + std::to_string(d) +
                                   " too small for " + std::to_string(cfg.pairs) + " index pairs");
        sets.emplace(n, stats::build_index_set(n, cfg.nu));
        pair_indices.emplace(n, detail::spread_indices(2 * cfg.pairs, d));
    }

    rec.normality_rows = detail::run_grid<NormalityRow>(cfg, store, [&](int n, long draw) {
        const int d = 2 * n + 1;
        RngStream rng = RngStream::derive(cfg.master_seed, static_cast<std::uint64_t>(n),
                                          static_cast<std::uint64_t>(draw));
        auto spec = detail::ensemble_for(cfg, d);
        auto h = ensembles::sample_wigner(spec, d, rng);
        auto eig = detail::checked_eig(h, n, draw);
        const double scale = cfg.scaling == "dN" ? std::sqrt(2.0 * d) : std::sqrt(4.0 * n);
        const cplx phase = std::polar(1.0, rng.uniform_angle());
        const auto& t = sets.at(n);
        const auto& idx = pair_indices.at(n);

        cplx q1_sum(0.0, 0.0), unb_sum(0.0, 0.0);
        long count = 0;
        for (int k : t.members) {
            const int krow = k + n;
            for (int p = 0; p < cfg.pairs; ++p) {
                cplx za = scale * phase * eig.vectors(krow, idx[2 * p]);
                cplx zb = scale * phase * eig.vectors(krow, idx[2 * p + 1]);
                q1_sum += za * zb * std::conj(za) * std::conj(zb);
                unb_sum += za * zb * std::conj(za);
                ++count;
            }
        }
        NormalityRow r;
        r.N = n;
        r.draw = draw;
        r.n_samples = count;
        r.q1 = q1_sum / static_cast<double>(count);
        r.unb = unb_sum / static_cast<double>(count);
        return r;
    });

    aggregate_normality(cfg, rec);
}

inline std::vector<std::string> que_header(const ExperimentConfig& cfg) {
    std::vector<std::string> header = {"N", "draw", "n_k"};
    for (int s : cfg.supports)
        for (std::size_t di = 0; di < cfg.deltas.size(); ++di)
            header.push_back("que_" + std::to_string(s) + "_" + std::to_string(di));
    return header;
}

inline std::vector<std::string> que_row_cells(const QueRow& r) {
    std::vector<std::string> c = {std::to_string(r.N), std::to_string(r.draw), std::to_string(r.n_k)};
    for (long v : r.exceed) c.push_back(std::to_string(v));
    return c;
}

inline QueRow que_row_parse(const ExperimentConfig& cfg, const std::vector<std::string>& c) {
    const std::size_t n_counts = cfg.supports.size() * cfg.deltas.size();
    if (c.size() != 3 + n_counts) throw numeric_error("raw.csv: que row has wrong column count");
    QueRow r;
    r.N = static_cast<int>(io::parse_int(c[0]));
    r.draw = io::parse_int(c[1]);
    r.n_k = io::parse_int(c[2]);
    for (std::size_t i = 0; i < n_counts; ++i) r.exceed.push_back(io::parse_int(c[3 + i]));
    return r;
}

inline void aggregate_que(const ExperimentConfig& cfg, RunRecord& rec) {
    rec.que_agg.clear();
    const std::size_t n_counts = cfg.supports.size() * cfg.deltas.size();
    std::map<int, std::pair<long, std::vector<long>>> tally;  // N -> (samples, counts)
    for (const auto& r : rec.que_rows) {
        auto& [samples, counts] = tally[r.N];
        counts.resize(n_counts, 0);
        samples += r.n_k;
        for (std::size_t i = 0; i < n_counts && i < r.exceed.size(); ++i) counts[i] += r.exceed[i];
    }
    for (int n : cfg.n_list) {
        auto it = tally.find(n);
        if (it == tally.end()) continue;
        for (std::size_t si = 0; si < cfg.supports.size(); ++si)
            for (std::size_t di = 0; di < cfg.deltas.size(); ++di) {
                QueAggRow a;
                a.N = n;
                a.d = 2 * n + 1;
                a.support = cfg.supports[si];
                a.delta = cfg.deltas[di];
                a.samples = it->second.first;
                a.tail = static_cast<double>(it->second.second[si * cfg.deltas.size() + di]) /
                         std::max<long>(1, it->second.first);
                rec.que_agg.push_back(a);
            }
    }
}

inline void run_que(const ExperimentConfig& cfg, RunRecord& rec) {
    const std::size_t n_counts = cfg.supports.size() * cfg.deltas.size();
    detail::RowStore<QueRow> store(
        cfg.out_dir, que_header(cfg),
        [](const QueRow& r) { return que_row_cells(r); },
        [&cfg](const std::vector<std::string>& c) { return que_row_parse(cfg, c); });

    std::map<int, stats::IndexSetT> sets;
    std::map<int, std::vector<std::vector<double>>> weights;  // per N, per support
    for (int n : cfg.n_list) {
        const int d = 2 * n + 1;
        sets.emplace(n, stats::build_index_set(n, cfg.nu));
        std::vector<std::vector<double>> ws;
        for (int s : cfg.supports) {
            if (s > d)
                throw validation_error("que: support " + std::to_string(s) +
                                       " exceeds dimension " + std::to_string(d));
            std::vector<double> a(d, 0.0);
            std::vector<int> idx = detail::spread_indices(s, d);
            for (int j = 0; j < s; ++j) a[idx[j]] = (j % 2 == 0) ? 1.0 : -1.0;
            ws.push_back(std::move(a));
        }
        weights.emplace(n, std::move(ws));
    }

    rec.que_rows = detail::run_grid<QueRow>(cfg, store, [&](int n, long draw) {
        const int d = 2 * n + 1;
        RngStream rng = RngStream::derive(cfg.master_seed, static_cast<std::uint64_t>(n),
                                          static_cast<std::uint64_t>(draw));
        auto spec = detail::ensemble_for(cfg, d);
        auto h = ensembles::sample_wigner(spec, d, rng);
        auto eig = detail::checked_eig(h, n, draw);
        const auto& t = sets.at(n);
        const auto& ws = weights.at(n);

        QueRow r;
        r.N = n;
        r.draw = draw;
        r.n_k = t.size();
        r.exceed.assign(n_counts, 0);
        for (int k : t.members) {
            std::span<const cplx> row = eig.vectors.row(k + n);
            for (std::size_t si = 0; si < ws.size(); ++si) {
                double stat = stats::local_que_statistic(row, ws[si]);
                for (std::size_t di = 0; di < cfg.deltas.size(); ++di)
                    if (std::abs(stat) > cfg.deltas[di]) ++r.exceed[si * cfg.deltas.size() + di];
            }
        }
        return r;
    });

    aggregate_que(cfg, rec);
}

inline std::vector<std::string> weingarten_header() {
    return {"pattern", "m", "d", "exact", "leading", "mc_re", "mc_im", "mc_se", "draws"};
}

inline std::vector<std::string> weingarten_row_cells(const WeingartenRow& r) {
    return {r.pattern,
            std::to_string(r.m),
            std::to_string(r.d),
            io::format_double(r.exact),
            io::format_double(r.leading),
            io::format_double(r.mc.real()),
            io::format_double(r.mc.imag()),
            io::format_double(r.mc_se),
            std::to_string(r.draws)};
}

inline WeingartenRow weingarten_row_parse(const std::vector<std::string>& c) {
    if (c.size() != 9) throw numeric_error("raw.csv: weingarten row has wrong column count");
    WeingartenRow r;
    r.pattern = c[0];
    r.m = static_cast<int>(io::parse_int(c[1]));
    r.d = static_cast<int>(io::parse_int(c[2]));
    r.exact = io::parse_double(c[3]);
    r.leading = io::parse_double(c[4]);
    r.mc = {io::parse_double(c[5]), io::parse_double(c[6])};
    r.mc_se = io::parse_double(c[7]);
    r.draws = io::parse_int(c[8]);
    return r;
}

inline void run_weingarten(const ExperimentConfig& cfg, RunRecord& rec) {
    struct PatternDef {
        std::string name;
        oracle::MomentPattern pattern;
        std::vector<int> dirichlet_exponents;  // same-column Dirichlet route
    };
    std::vector<PatternDef> defs;
    {
        oracle::MomentPattern p;
        p.z = {{0, 0}};
        p.zbar = {{0, 0}};
        defs.push_back({"m1", p, {1}});
    }
    {
        oracle::MomentPattern p;
        p.z = {{0, 1}, {0, 2}};
        p.zbar = {{0, 1}, {0, 2}};
        defs.push_back({"m2_same_row_distinct", p, {1, 1}});
    }
    {
        oracle::MomentPattern p;
        p.z = {{0, 1}, {0, 1}};
        p.zbar = {{0, 1}, {0, 1}};
        defs.push_back({"m2_same_row_equal", p, {2}});
    }
    {
        // Two rows, same column: column exchangeability gives the same
        // Dirichlet value as two distinct entries of one row.
        oracle::MomentPattern p;
        p.z = {{0, 2}, {3, 2}};
        p.zbar = {{0, 2}, {3, 2}};
        defs.push_back({"m2_cross_row", p, {1, 1}});
    }

    for (int d : cfg.d_list) {
        for (std::size_t pi = 0; pi < defs.size(); ++pi) {
            const auto& def = defs[pi];
            RngStream rng = RngStream::derive(cfg.master_seed, static_cast<std::uint64_t>(d),
                                              static_cast<std::uint64_t>(pi));
            auto est = oracle::haar_mc_moment(def.pattern, d, static_cast<std::size_t>(cfg.mc_draws), rng);
            WeingartenRow row;
            row.pattern = def.name;
            row.m = static_cast<int>(def.pattern.order());
            row.d = d;
            row.exact = oracle::dirichlet_moment(d, def.dirichlet_exponents).value();
            row.leading = oracle::weingarten_leading(def.pattern, d);
            row.mc = est.mean;
            row.mc_se = est.se;
            row.draws = cfg.mc_draws;
            rec.weingarten_rows.push_back(std::move(row));
        }
    }

    detail::RowStore<WeingartenRow> store(
        cfg.out_dir, weingarten_header(),
        [](const WeingartenRow& r) { return weingarten_row_cells(r); },
        [](const std::vector<std::string>& c) { return weingarten_row_parse(c); });
    store.finalize(rec.weingarten_rows);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Report emission.

namespace detail {

inline void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw validation_error("cannot write " + path.string());
    for (const auto& l : lines) out << l << "\n";
    if (!out) throw validation_error("write failed for " + path.string());
}

inline nlohmann::json fit_json(const std::optional<stats::LogLogFit>& fit) {
    if (!fit) return nullptr;
    return {{"slope", fit->slope}, {"intercept", fit->intercept}, {"r2", fit->r2}};
}

}  // namespace detail

// Writes aggregate.csv, summary.json and the plot-data files for a record
// whose rows and aggregates are already populated.
inline void emit_report(const RunRecord& rec) {
    const auto& cfg = rec.cfg;
    fs::create_directories(cfg.out_dir / "plots");
    nlohmann::json summary;
    summary["kind"] = kind_name(cfg.kind);
    summary["config_hash"] = rec.config_hash;
    summary["wall_seconds"] = rec.wall_seconds;
    summary["slopes"] = nullptr;
    summary["pass"] = nlohmann::json::object();

    std::vector<std::string> agg_lines;
    std::vector<std::string> plot_lines;

    switch (cfg.kind) {
        case ExperimentKind::Qe: {
            agg_lines.push_back(
                "N,d,draws,mean_X,se_X,mean_X2,se_X2,mean_Z,se_Z,haar_Z,cesaro,kolmogorov");
            for (const auto& a : rec.qe_agg) {
                std::string line = std::to_string(a.N) + "," + std::to_string(a.d) + "," +
                                   std::to_string(a.draws) + "," + io::format_double(a.mean_x) + "," +
                                   io::format_double(a.se_x) + "," + io::format_double(a.mean_x2) +
                                   "," + io::format_double(a.se_x2) + "," + detail::opt_cell(a.mean_z) +
                                   "," + detail::opt_cell(a.se_z) + "," + detail::opt_cell(a.haar_z) +
                                   "," + detail::opt_cell(a.cesaro) + "," +
                                   detail::opt_cell(a.kolmogorov);
                agg_lines.push_back(line);
            }
            summary["slopes"] = {{"mean_x", detail::fit_json(rec.fit_x)},
                                 {"mean_x2", detail::fit_json(rec.fit_x2)},
                                 {"haar_anchor", detail::fit_json(rec.fit_anchor)}};
            if (cfg.slope_max && rec.fit_x)
                summary["pass"]["slope_x"] = rec.fit_x->slope <= *cfg.slope_max;
            if (cfg.slope_x2_max && rec.fit_x2)
                summary["pass"]["slope_x2"] = rec.fit_x2->slope <= *cfg.slope_x2_max;
            if (cfg.r2_min && rec.fit_x) summary["pass"]["r2_x"] = rec.fit_x->r2 >= *cfg.r2_min;

            plot_lines.clear();
            plot_lines.push_back("d,mean_X");
            for (const auto& a : rec.qe_agg)
                plot_lines.push_back(std::to_string(a.d) + "," + io::format_double(a.mean_x));
            detail::write_lines(cfg.out_dir / "plots" / "ex_vs_d.csv", plot_lines);

            if (!rec.qe_agg.empty() && rec.qe_agg.front().cesaro) {
                plot_lines.clear();
                plot_lines.push_back("M,cesaro");
                for (const auto& a : rec.qe_agg)
                    if (a.cesaro)
                        plot_lines.push_back(std::to_string(a.N) + "," + io::format_double(*a.cesaro));
                detail::write_lines(cfg.out_dir / "plots" / "cesaro.csv", plot_lines);
            }
            break;
        }
        case ExperimentKind::Normality: {
            agg_lines.push_back("N,d,draws,empirical,se,target,gap,unb_abs,unb_se");
            for (const auto& a : rec.normality_agg) {
                agg_lines.push_back(std::to_string(a.N) + "," + std::to_string(a.d) + "," +
                                    std::to_string(a.draws) + "," + io::format_double(a.emp) + "," +
                                    io::format_double(a.se) + "," + io::format_double(a.target) +
                                    "," + io::format_double(a.gap) + "," +
                                    io::format_double(a.unb_abs) + "," + io::format_double(a.unb_se));
            }
            summary["slopes"] = {{"moment_gap", detail::fit_json(rec.fit_gap)}};
            if (cfg.gap_slope_max && rec.fit_gap)
                summary["pass"]["gap_slope"] = rec.fit_gap->slope <= *cfg.gap_slope_max;
            bool monotone = true;
            for (std::size_t i = 1; i < rec.normality_agg.size(); ++i) {
                const auto& prev = rec.normality_agg[i - 1];
                const auto& cur = rec.normality_agg[i];
                if (cur.gap > prev.gap + 2.0 * (prev.se + cur.se)) monotone = false;
            }
            if (rec.normality_agg.size() >= 2) summary["pass"]["gap_monotone"] = monotone;

            plot_lines.clear();
            plot_lines.push_back("N,gap");
            for (const auto& a : rec.normality_agg)
                plot_lines.push_back(std::to_string(a.N) + "," + io::format_double(a.gap));
            detail::write_lines(cfg.out_dir / "plots" / "moment_gap.csv", plot_lines);
            break;
        }
        case ExperimentKind::Que: {
            agg_lines.push_back("N,d,support,delta,tail,samples");
            for (const auto& a : rec.que_agg) {
                agg_lines.push_back(std::to_string(a.N) + "," + std::to_string(a.d) + "," +
                                    std::to_string(a.support) + "," + io::format_double(a.delta) +
                                    "," + io::format_double(a.tail) + "," + std::to_string(a.samples));
            }
            // Monotonicity summaries at the first delta.
            if (!cfg.deltas.empty() && !cfg.n_list.empty() && !cfg.supports.empty()) {
                int n_big = cfg.n_list.back();
                std::vector<double> by_support;
                for (int s : cfg.supports)
                    for (const auto& a : rec.que_agg)
                        if (a.N == n_big && a.support == s && a.delta == cfg.deltas.front())
                            by_support.push_back(a.tail);
                bool dec_support = by_support.size() == cfg.supports.size();
                for (std::size_t i = 1; i < by_support.size() && dec_support; ++i)
                    if (by_support[i] > by_support[i - 1]) dec_support = false;
                if (dec_support && by_support.size() >= 2 && by_support.back() >= by_support.front())
                    dec_support = false;
                summary["pass"]["tail_decreasing_in_support"] = dec_support;

                int s_small = cfg.supports.front();
                std::vector<double> by_d;
                for (int n : cfg.n_list)
                    for (const auto& a : rec.que_agg)
                        if (a.N == n && a.support == s_small && a.delta == cfg.deltas.front())
                            by_d.push_back(a.tail);
                bool dec_d = by_d.size() == cfg.n_list.size() && by_d.size() >= 2;
                for (std::size_t i = 1; i < by_d.size() && dec_d; ++i)
                    if (by_d[i] >= by_d[i - 1]) dec_d = false;
                summary["pass"]["tail_decreasing_in_d"] = dec_d;

                plot_lines.clear();
                plot_lines.push_back("support,tail");
                for (std::size_t i = 0; i < by_support.size(); ++i)
                    plot_lines.push_back(std::to_string(cfg.supports[i]) + "," +
                                         io::format_double(by_support[i]));
                detail::write_lines(cfg.out_dir / "plots" / "que_tail.csv", plot_lines);
            }
            break;
        }
        case ExperimentKind::Weingarten: {
            agg_lines.push_back("pattern,m,d,exact,leading,mc_re,mc_se,exact_ok,remainder_ok");
            bool all_exact = true, all_remainder = true;
            for (const auto& r : rec.weingarten_rows) {
                bool exact_ok = std::abs(r.mc.real() - r.exact) <= 4.0 * r.mc_se;
                bool rem_ok = std::abs(r.leading - r.mc.real()) <=
                              3.0 * std::pow(static_cast<double>(r.d), -(r.m + 1)) + 4.0 * r.mc_se;
                all_exact = all_exact && exact_ok;
                all_remainder = all_remainder && rem_ok;
                agg_lines.push_back(r.pattern + "," + std::to_string(r.m) + "," + std::to_string(r.d) +
                                    "," + io::format_double(r.exact) + "," +
                                    io::format_double(r.leading) + "," + io::format_double(r.mc.real()) +
                                    "," + io::format_double(r.mc_se) + "," +
                                    (exact_ok ? "1" : "0") + "," + (rem_ok ? "1" : "0"));
            }
            summary["pass"]["dirichlet_match"] = all_exact;
            summary["pass"]["weingarten_remainder"] = all_remainder;
            break;
        }
    }

    detail::write_lines(cfg.out_dir / "aggregate.csv", agg_lines);
    std::ofstream js(cfg.out_dir / "summary.json", std::ios::trunc);
    if (!js) throw validation_error("cannot write " + (cfg.out_dir / "summary.json").string());
    js << summary.dump(2) << "\n";
}

// ---------------------------------------------------------------------------

inline RunRecord run_experiment(const ExperimentConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(cfg.out_dir);

    // Guard against resuming into a directory produced by a different config.
    fs::path cfg_path = cfg.out_dir / "config.ini";
    std::string hash = science_hash(cfg.raw);
    if (fs::exists(cfg_path)) {
        ConfigMap previous = ConfigMap::parse_file(cfg_path);
        if (science_hash(previous) != hash)
            throw validation_error("output directory " + cfg.out_dir.string() +
                                   " holds results of a different config; refusing to resume");
    } else {
        std::ofstream out(cfg_path);
        if (!out) throw validation_error("cannot write " + cfg_path.string());
        out << cfg.raw.canonical_text();
    }

    RunRecord rec;
    rec.cfg = cfg;
    rec.config_hash = hash;

    switch (cfg.kind) {
        case ExperimentKind::Qe: detail::run_qe(cfg, rec); break;
        case ExperimentKind::Normality: detail::run_normality(cfg, rec); break;
        case ExperimentKind::Que: detail::run_que(cfg, rec); break;
        case ExperimentKind::Weingarten: detail::run_weingarten(cfg, rec); break;
    }

    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    emit_report(rec);
    return rec;
}

// Rebuilds aggregates and reports from a persisted run directory.
inline RunRecord report_from_dir(const fs::path& out_dir) {
    fs::path cfg_path = out_dir / "config.ini";
    if (!fs::exists(cfg_path))
        throw validation_error("report: no config.ini in " + out_dir.string());
    ConfigMap raw = ConfigMap::parse_file(cfg_path);
    raw.set("experiment.out", out_dir.string());
    ExperimentConfig cfg = resolve_config(raw);
    if (!fs::exists(out_dir / "raw.csv"))
        throw validation_error("report: no raw.csv in " + out_dir.string());

    RunRecord rec;
    rec.cfg = cfg;
    rec.config_hash = science_hash(raw);

    detail::CsvTable t = detail::read_csv(out_dir / "raw.csv");
    switch (cfg.kind) {
        case ExperimentKind::Qe:
            for (const auto& cells : t.rows) rec.qe_rows.push_back(qe_row_parse(cfg, cells));
            detail::aggregate_qe(cfg, rec);
            break;
        case ExperimentKind::Normality:
            for (const auto& cells : t.rows)
                rec.normality_rows.push_back(detail::normality_row_parse(cells));
            detail::aggregate_normality(cfg, rec);
            break;
        case ExperimentKind::Que:
            for (const auto& cells : t.rows) rec.que_rows.push_back(detail::que_row_parse(cfg, cells));
            detail::aggregate_que(cfg, rec);
            break;
        case ExperimentKind::Weingarten:
            for (const auto& cells : t.rows)
                rec.weingarten_rows.push_back(detail::weingarten_row_parse(cells));
            break;
    }
    emit_report(rec);
    return rec;
}

}  // namespace qelab::runner
