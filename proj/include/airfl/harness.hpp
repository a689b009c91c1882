#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "airfl/common.hpp"
#include "airfl/fedlearn.hpp"

namespace airfl {

namespace stream {
constexpr uint64_t kTopology = 0x11;
constexpr uint64_t kData = 0x22;
constexpr uint64_t kChannel = 0x33;
constexpr uint64_t kDlNoise = 0x44;
constexpr uint64_t kUlNoise = 0x55;
constexpr uint64_t kBatch = 0x66;
constexpr uint64_t kInit = 0x77;
}  // namespace stream

struct IdxCellSource {
    std::string train_images, train_labels, test_images, test_labels;
    int label_lo = 0, label_hi = 4;
};

struct ExperimentConfig {
    uint64_t seed = 1;
    int rounds = 100;
    int repetitions = 10;

    GeometryConfig geometry;
    bool topology_resample = true;

    ChannelParams channel;
    bool channel_resample = true;

    Vec p_dl_budget_w;        // per BS
    double p_ul_low_w = 0.0;  // first floor(K/2) devices of each cell
    double p_ul_high_w = 0.0;
    double sigma_sq_dl_w = 0.0;
    double sigma_sq_ul_w = 0.0;

    Vec kappa;
    std::vector<std::string> schemes;

    std::string data_source = "synthetic";
    int classes = 3;
    int features = 4;
    int train_per_cell = 200;
    int test_per_cell = 200;
    double blob_radius = 1.5;
    double blob_spread = 0.8;
    bool data_resample = true;
    std::vector<IdxCellSource> idx_cells;

    Vec eta;
    std::string l_policy = "auto";
    double l_value = 1.0;
    int batch_size = 0;
    std::string init_model = "zeros";
    double init_scale = 0.01;

    double eps_dl = 1e-9;
    double eps_ul = 1e-9;
    double tol = 1e-9;

    Vec pareto_kappas{0.0001, 0.001, 0.1, 0.5, 0.9, 0.99, 0.9999};
    double pareto_nu = 1.0;
    double pareto_upsilon = 0.5;
    double pareto_l = 1.0;
};

// ---- config parsing: flat "dotted.key = value" lines, '#' comments ----

namespace detail {

inline std::string strip(const std::string& s) {
    const size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    const size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (...) {
        throw validation_error("config: expected number for '" + key + "', got '" + v + "'");
    }
}

inline int parse_int(const std::string& key, const std::string& v) {
    const double x = parse_double(key, v);
    const int i = static_cast<int>(x);
    if (x != static_cast<double>(i)) throw validation_error("config: expected integer for '" + key + "'");
    return i;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw validation_error("config: expected true/false for '" + key + "'");
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (true) {
        const size_t next = s.find(sep, pos);
        out.push_back(strip(s.substr(pos, next == std::string::npos ? next : next - pos)));
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    return out;
}

inline Vec parse_list(const std::string& key, const std::string& v) {
    Vec out;
    for (const auto& tok : split(v, ','))
        if (!tok.empty()) out.push_back(parse_double(key, tok));
    if (out.empty()) throw validation_error("config: empty list for '" + key + "'");
    return out;
}

inline std::vector<std::array<double, 2>> parse_points(const std::string& key, const std::string& v) {
    std::vector<std::array<double, 2>> out;
    for (const auto& pair : split(v, ';')) {
        if (pair.empty()) continue;
        std::istringstream iss(pair);
        double x, y;
        if (!(iss >> x >> y)) throw validation_error("config: expected 'x y' pairs for '" + key + "'");
        out.push_back({x, y});
    }
    if (out.empty()) throw validation_error("config: empty point list for '" + key + "'");
    return out;
}

}  // namespace detail

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("config: cannot open " + path);

    ExperimentConfig cfg;
    cfg.geometry.bs_positions = {{0.0, 0.0}, {40.0, 0.0}};
    cfg.geometry.devices_per_cell = {5, 5};
    cfg.p_dl_budget_w = {dbm_to_watts(40.0), dbm_to_watts(30.0)};
    cfg.p_ul_low_w = dbm_to_watts(15.0);
    cfg.p_ul_high_w = dbm_to_watts(30.0);
    cfg.sigma_sq_dl_w = dbm_to_watts(-110.0);
    cfg.sigma_sq_ul_w = dbm_to_watts(-110.0);
    cfg.kappa = {0.5, 0.5};
    cfg.schemes = {"Benchmark"};
    cfg.eta = {0.05, 0.05};
    cfg.channel.beta = db_to_linear(5.0);

    Vec devices_list{5, 5};
    Vec eta_list = cfg.eta;

    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::strip(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw validation_error("config: missing '=' at line " + std::to_string(lineno));
        const std::string key = detail::strip(line.substr(0, eq));
        const std::string val = detail::strip(line.substr(eq + 1));
        if (val.empty()) throw validation_error("config: empty value for '" + key + "'");

        if (key == "seed") cfg.seed = static_cast<uint64_t>(detail::parse_double(key, val));
        else if (key == "rounds") cfg.rounds = detail::parse_int(key, val);
        else if (key == "repetitions") cfg.repetitions = detail::parse_int(key, val);
        else if (key == "topology.bs") cfg.geometry.bs_positions = detail::parse_points(key, val);
        else if (key == "topology.devices_per_cell") devices_list = detail::parse_list(key, val);
        else if (key == "topology.radius") {
            const Vec r = detail::parse_list(key, val);
            if (r.size() != 2) throw validation_error("config: 'topology.radius' needs min,max");
            cfg.geometry.radius_min = r[0];
            cfg.geometry.radius_max = r[1];
        } else if (key == "topology.resample_per_rep") cfg.topology_resample = detail::parse_bool(key, val);
        else if (key == "channel.alpha") cfg.channel.alpha = detail::parse_double(key, val);
        else if (key == "channel.beta_db") cfg.channel.beta = db_to_linear(detail::parse_double(key, val));
        else if (key == "channel.shared_blocks") cfg.channel.shared_blocks = detail::parse_bool(key, val);
        else if (key == "channel.resample_per_rep") cfg.channel_resample = detail::parse_bool(key, val);
        else if (key == "budgets.p_dl_dbm") {
            cfg.p_dl_budget_w.clear();
            for (double d : detail::parse_list(key, val)) cfg.p_dl_budget_w.push_back(dbm_to_watts(d));
        } else if (key == "budgets.p_ul_low_dbm") cfg.p_ul_low_w = dbm_to_watts(detail::parse_double(key, val));
        else if (key == "budgets.p_ul_high_dbm") cfg.p_ul_high_w = dbm_to_watts(detail::parse_double(key, val));
        else if (key == "noise.dl_dbm") cfg.sigma_sq_dl_w = dbm_to_watts(detail::parse_double(key, val));
        else if (key == "noise.ul_dbm") cfg.sigma_sq_ul_w = dbm_to_watts(detail::parse_double(key, val));
        else if (key == "kappa") cfg.kappa = detail::parse_list(key, val);
        else if (key == "schemes") {
            cfg.schemes.clear();
            for (const auto& s : detail::split(val, ';'))
                if (!s.empty()) cfg.schemes.push_back(s);
            if (cfg.schemes.empty()) throw validation_error("config: empty scheme list");
        } else if (key == "data.source") cfg.data_source = val;
        else if (key == "data.classes") cfg.classes = detail::parse_int(key, val);
        else if (key == "data.features") cfg.features = detail::parse_int(key, val);
        else if (key == "data.train_per_cell") cfg.train_per_cell = detail::parse_int(key, val);
        else if (key == "data.test_per_cell") cfg.test_per_cell = detail::parse_int(key, val);
        else if (key == "data.blob_radius") cfg.blob_radius = detail::parse_double(key, val);
        else if (key == "data.blob_spread") cfg.blob_spread = detail::parse_double(key, val);
        else if (key == "data.resample_per_rep") cfg.data_resample = detail::parse_bool(key, val);
        else if (key.rfind("data.idx.cell", 0) == 0) {
            const size_t dot = key.find('.', 13);
            if (dot == std::string::npos) throw validation_error("config: malformed key '" + key + "'");
            const int cell = detail::parse_int(key, key.substr(13, dot - 13));
            if (cell < 1 || cell > 64) throw validation_error("config: bad cell index in '" + key + "'");
            if (static_cast<int>(cfg.idx_cells.size()) < cell) cfg.idx_cells.resize(cell);
            IdxCellSource& src = cfg.idx_cells[cell - 1];
            const std::string field = key.substr(dot + 1);
            if (field == "train_images") src.train_images = val;
            else if (field == "train_labels") src.train_labels = val;
            else if (field == "test_images") src.test_images = val;
            else if (field == "test_labels") src.test_labels = val;
            else if (field == "label_lo") src.label_lo = detail::parse_int(key, val);
            else if (field == "label_hi") src.label_hi = detail::parse_int(key, val);
            else throw validation_error("config: unknown key '" + key + "'");
        } else if (key == "learner.eta") eta_list = detail::parse_list(key, val);
        else if (key == "learner.l_policy") cfg.l_policy = val;
        else if (key == "learner.l_value") cfg.l_value = detail::parse_double(key, val);
        else if (key == "learner.batch_size") cfg.batch_size = detail::parse_int(key, val);
        else if (key == "init.model") cfg.init_model = val;
        else if (key == "init.scale") cfg.init_scale = detail::parse_double(key, val);
        else if (key == "solver.eps_dl") cfg.eps_dl = detail::parse_double(key, val);
        else if (key == "solver.eps_ul") cfg.eps_ul = detail::parse_double(key, val);
        else if (key == "solver.tol") cfg.tol = detail::parse_double(key, val);
        else if (key == "pareto.kappas") cfg.pareto_kappas = detail::parse_list(key, val);
        else if (key == "pareto.nu") cfg.pareto_nu = detail::parse_double(key, val);
        else if (key == "pareto.upsilon") cfg.pareto_upsilon = detail::parse_double(key, val);
        else if (key == "pareto.l") cfg.pareto_l = detail::parse_double(key, val);
        else throw validation_error("config: unknown key '" + key + "'");
    }

    // Broadcast per-cell lists and validate.
    const int M = static_cast<int>(cfg.geometry.bs_positions.size());
    auto broadcast = [&](Vec v, const char* key) {
        if (static_cast<int>(v.size()) == 1) v.assign(M, v[0]);
        if (static_cast<int>(v.size()) != M)
            throw validation_error(std::string("config: '") + key + "' needs 1 or " + std::to_string(M) +
                                   " entries");
        return v;
    };
    cfg.geometry.devices_per_cell.clear();
    for (double d : broadcast(devices_list, "topology.devices_per_cell"))
        cfg.geometry.devices_per_cell.push_back(static_cast<int>(d));
    cfg.p_dl_budget_w = broadcast(cfg.p_dl_budget_w, "budgets.p_dl_dbm");
    cfg.kappa = broadcast(cfg.kappa, "kappa");
    cfg.eta = broadcast(eta_list, "learner.eta");

    double ks = 0.0;
    for (double k : cfg.kappa) {
        if (!(k >= 0.0)) throw validation_error("config: 'kappa' entries must be nonnegative");
        ks += k;
    }
    if (std::abs(ks - 1.0) > 1e-12) throw validation_error("config: 'kappa' must sum to 1");
    if (cfg.rounds < 1) throw validation_error("config: 'rounds' must be >= 1");
    if (cfg.repetitions < 1) throw validation_error("config: 'repetitions' must be >= 1");
    for (double e : cfg.eta)
        if (!(e > 0.0)) throw validation_error("config: 'learner.eta' must be positive");
    if (!(cfg.geometry.radius_min > 0.0) || cfg.geometry.radius_min > cfg.geometry.radius_max)
        throw validation_error("config: 'topology.radius' must satisfy 0 < min <= max");
    for (const auto& s : cfg.schemes) parse_scheme(s);  // fail fast on unknown names
    if (cfg.data_source != "synthetic" && cfg.data_source != "idx")
        throw validation_error("config: 'data.source' must be synthetic or idx");
    if (cfg.data_source == "idx" && static_cast<int>(cfg.idx_cells.size()) < M)
        throw validation_error("config: idx source needs data.idx.cellN.* for every cell");
    if (cfg.l_policy != "auto" && cfg.l_policy != "fixed")
        throw validation_error("config: 'learner.l_policy' must be auto or fixed");
    if (cfg.init_model != "zeros" && cfg.init_model != "gaussian")
        throw validation_error("config: 'init.model' must be zeros or gaussian");
    return cfg;
}

// ---- experiment driver ----

struct MetricsRow {
    int repetition = 0;
    int round = 0;
    int cell = 0;  // 1-based in the CSV
    std::string scheme;
    double train_loss = 0.0, test_acc = 0.0;
    double zeta_dl = 0.0, zeta_ul = 0.0;
    double e_dl = 0.0, e_ul = 0.0, gap_m = 0.0;
};

struct SchemeRun {
    Scheme scheme;
    FlState state;
};

struct RepetitionRun {
    int rep = 0;
    World world;
    Vec loss0, acc0;  // metrics at the shared initial model
    std::vector<SchemeRun> runs;
};

struct ExperimentResult {
    std::vector<MetricsRow> rows;
    std::vector<MetricsRow> avg_rows;  // repetition column dropped on write
    std::vector<RepetitionRun> reps;
};

inline World build_world(const ExperimentConfig& cfg, int rep) {
    World world;
    const uint64_t topo_rep = cfg.topology_resample ? static_cast<uint64_t>(rep) : 0;
    Rng topo_rng(cfg.seed, {stream::kTopology, topo_rep});
    world.topo = sample_topology(cfg.geometry, topo_rng);
    world.chp = cfg.channel;
    const int M = world.topo.cells;
    const int K = world.topo.total_devices();

    world.p_dl_budget = cfg.p_dl_budget_w;
    world.p_ul_budget.assign(K, 0.0);
    for (int m = 0; m < M; ++m) {
        const auto devices = world.topo.cell_devices(m);
        const size_t half = devices.size() / 2;
        for (size_t i = 0; i < devices.size(); ++i)
            world.p_ul_budget[devices[i]] = i < half ? cfg.p_ul_low_w : cfg.p_ul_high_w;
    }
    world.sigma_sq_dl.assign(K, cfg.sigma_sq_dl_w);
    world.sigma_sq_ul.assign(M, cfg.sigma_sq_ul_w);
    world.kappa = cfg.kappa;
    world.eta = cfg.eta;
    world.eps_dl = cfg.eps_dl;
    world.eps_ul = cfg.eps_ul;
    world.tol = cfg.tol;
    world.batch_size = cfg.batch_size;

    const uint64_t data_rep = cfg.data_resample ? static_cast<uint64_t>(rep) : 0;
    world.train_pool.resize(M);
    world.test_pool.resize(M);
    world.shards.resize(M);
    for (int m = 0; m < M; ++m) {
        Rng data_rng(cfg.seed, {stream::kData, data_rep, static_cast<uint64_t>(m)});
        if (cfg.data_source == "synthetic") {
            world.train_pool[m] =
                make_blobs(cfg.classes, cfg.features, cfg.train_per_cell, cfg.blob_radius, cfg.blob_spread, data_rng);
            world.test_pool[m] =
                make_blobs(cfg.classes, cfg.features, cfg.test_per_cell, cfg.blob_radius, cfg.blob_spread, data_rng);
        } else {
            const IdxCellSource& src = cfg.idx_cells[m];
            world.train_pool[m] = load_idx_dataset(src.train_images, src.train_labels, src.label_lo, src.label_hi);
            world.test_pool[m] = load_idx_dataset(src.test_images, src.test_labels, src.label_lo, src.label_hi);
        }
        const int k_m = world.topo.devices_per_cell[m];
        world.shards[m] = shard_dataset(world.train_pool[m], k_m, data_rng);
        // The pool seen by metrics is the sharded subset (remainder dropped).
        Dataset pool;
        pool.classes = world.train_pool[m].classes;
        pool.feat_dim = world.train_pool[m].feat_dim;
        for (const auto& sh : world.shards[m]) {
            pool.features.insert(pool.features.end(), sh.features.begin(), sh.features.end());
            pool.labels.insert(pool.labels.end(), sh.labels.begin(), sh.labels.end());
        }
        world.train_pool[m] = std::move(pool);
    }
    for (int m = 1; m < M; ++m) {
        if (world.train_pool[m].classes != world.train_pool[0].classes ||
            world.train_pool[m].feat_dim != world.train_pool[0].feat_dim)
            throw validation_error("config: all cells must share the same model dimensions");
    }

    if (cfg.l_policy == "fixed") {
        world.L = cfg.l_value;
    } else {
        world.L = 0.0;
        for (int m = 0; m < M; ++m) world.L = std::max(world.L, compute_smoothness(world.train_pool[m]));
    }
    return world;
}

inline std::vector<Vec> initial_models(const ExperimentConfig& cfg, const World& world, int rep) {
    const int M = world.topo.cells;
    const int D = model_dim(world.train_pool[0]);
    std::vector<Vec> w(M, Vec(static_cast<size_t>(D), 0.0));
    if (cfg.init_model == "gaussian") {
        Rng rng(cfg.seed, {stream::kInit, static_cast<uint64_t>(rep)});
        for (int m = 0; m < M; ++m)
            for (double& x : w[m]) x = cfg.init_scale * rng.normal();
    }
    return w;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    ExperimentResult result;
    const uint64_t chan_base = cfg.channel_resample ? 1 : 0;

    for (int rep = 0; rep < cfg.repetitions; ++rep) {
        RepetitionRun rr;
        rr.rep = rep;
        rr.world = build_world(cfg, rep);
        const int M = rr.world.topo.cells;
        const auto w0 = initial_models(cfg, rr.world, rep);
        rr.loss0.assign(M, 0.0);
        rr.acc0.assign(M, 0.0);
        for (int m = 0; m < M; ++m) {
            rr.loss0[m] = softmax_loss(w0[m], rr.world.train_pool[m]);
            rr.acc0[m] = evaluate(w0[m], rr.world.test_pool[m]).second;
        }

        for (const auto& scheme_name : cfg.schemes) {
            SchemeRun run;
            run.scheme = parse_scheme(scheme_name);
            run.state = FlState{};
            run.state.w = w0;
            for (int t = 1; t <= cfg.rounds; ++t) {
                const uint64_t crep = chan_base ? static_cast<uint64_t>(rep) : 0;
                RoundRng rng{Rng(cfg.seed, {stream::kChannel, crep, static_cast<uint64_t>(t)}),
                             Rng(cfg.seed, {stream::kDlNoise, crep, static_cast<uint64_t>(t)}),
                             Rng(cfg.seed, {stream::kUlNoise, crep, static_cast<uint64_t>(t)}),
                             Rng(cfg.seed, {stream::kBatch, static_cast<uint64_t>(rep), static_cast<uint64_t>(t)})};
                run_round(run.state, run.scheme, rr.world, rng);
            }
            rr.runs.push_back(std::move(run));
        }
        result.reps.push_back(std::move(rr));
    }

    // Flatten to rows: round 0 carries the shared initial metrics.
    for (const auto& rr : result.reps) {
        const int M = rr.world.topo.cells;
        for (const auto& run : rr.runs) {
            for (int m = 0; m < M; ++m) {
                MetricsRow row;
                row.repetition = rr.rep;
                row.round = 0;
                row.cell = m + 1;
                row.scheme = run.scheme.name;
                row.train_loss = rr.loss0[m];
                row.test_acc = rr.acc0[m];
                result.rows.push_back(row);
            }
            for (const auto& rec : run.state.history) {
                for (int m = 0; m < M; ++m) {
                    MetricsRow row;
                    row.repetition = rr.rep;
                    row.round = rec.round;
                    row.cell = m + 1;
                    row.scheme = run.scheme.name;
                    row.train_loss = rec.train_loss[m];
                    row.test_acc = rec.test_acc[m];
                    row.zeta_dl = rec.zeta0_dl[m];
                    row.zeta_ul = rec.zeta0_ul[m];
                    row.e_dl = rec.e_dl[m];
                    row.e_ul = rec.e_ul[m];
                    row.gap_m = rec.gap[m];
                    result.rows.push_back(row);
                }
            }
        }
    }

    // Deterministic repetition averages keyed by (scheme order, round, cell).
    const int M = result.reps.empty() ? 0 : result.reps[0].world.topo.cells;
    for (const auto& scheme_name : cfg.schemes) {
        for (int t = 0; t <= cfg.rounds; ++t) {
            for (int m = 1; m <= M; ++m) {
                MetricsRow avg;
                avg.repetition = -1;
                avg.round = t;
                avg.cell = m;
                avg.scheme = scheme_name;
                int count = 0;
                for (const auto& row : result.rows) {
                    if (row.scheme != scheme_name || row.round != t || row.cell != m) continue;
                    avg.train_loss += row.train_loss;
                    avg.test_acc += row.test_acc;
                    avg.zeta_dl += row.zeta_dl;
                    avg.zeta_ul += row.zeta_ul;
                    avg.e_dl += row.e_dl;
                    avg.e_ul += row.e_ul;
                    avg.gap_m += row.gap_m;
                    ++count;
                }
                const double inv = 1.0 / static_cast<double>(count);
                avg.train_loss *= inv;
                avg.test_acc *= inv;
                avg.zeta_dl *= inv;
                avg.zeta_ul *= inv;
                avg.e_dl *= inv;
                avg.e_ul *= inv;
                avg.gap_m *= inv;
                result.avg_rows.push_back(std::move(avg));
            }
        }
    }
    return result;
}

namespace detail {

inline std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace detail

inline void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path, bool with_rep) {
    std::string text = with_rep ? "repetition,round,cell,scheme,train_loss,test_acc,zeta_dl,zeta_ul,E_dl,E_ul,gap_m\n"
                                : "round,cell,scheme,train_loss,test_acc,zeta_dl,zeta_ul,E_dl,E_ul,gap_m\n";
    for (const auto& r : rows) {
        std::string line;
        if (with_rep) line += std::to_string(r.repetition) + ",";
        line += std::to_string(r.round) + "," + std::to_string(r.cell) + "," + r.scheme + "," +
                detail::fmt_double(r.train_loss) + "," + detail::fmt_double(r.test_acc) + "," +
                detail::fmt_double(r.zeta_dl) + "," + detail::fmt_double(r.zeta_ul) + "," +
                detail::fmt_double(r.e_dl) + "," + detail::fmt_double(r.e_ul) + "," +
                detail::fmt_double(r.gap_m) + "\n";
        text += line;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
    if (!out) {
        out.close();
        std::remove(path.c_str());
        throw std::runtime_error("failed while writing " + path);
    }
}

// ---- Pareto sweep at the power-control level ----

struct ParetoPoint {
    std::string label;
    double kappa_bar = -1.0;  // -1 for baseline points
    double zeta = 0.0;
    Vec delta;  // per cell
};

inline std::vector<ParetoPoint> run_pareto(const ExperimentConfig& cfg) {
    World world = build_world(cfg, 0);
    const int M = world.topo.cells;
    const int K = world.topo.total_devices();
    Rng chan_rng(cfg.seed, {stream::kChannel, 0, 1});
    const ChannelSet cs = realize_round(world.topo, world.chp, chan_rng);
    const Vec nu(M, cfg.pareto_nu);
    const Vec upsilon(K, cfg.pareto_upsilon);
    const double L = cfg.pareto_l;
    Vec kcount(M, 0.0);
    for (int k = 0; k < K; ++k) kcount[cs.home(k)] += 1.0;

    auto gaps_for_plan = [&](const Vec& p_dl, const Vec& p_ul, const Vec& c) {
        GapTerms terms;
        terms.e_dl = expected_dl_error(cs, p_dl, nu, world.sigma_sq_dl);
        terms.e_ul = expected_ul_error(cs, p_ul, c, upsilon, world.sigma_sq_ul);
        terms.eta = world.eta;
        terms.L = L;
        terms.kcount = kcount;
        return gap_tuple(terms);
    };

    std::vector<ParetoPoint> points;
    std::vector<GapProfile> profiles;
    for (double kb : cfg.pareto_kappas) {
        GapProfile prof;
        prof.kappa.assign(M, M > 1 ? (1.0 - kb) / static_cast<double>(M - 1) : 0.0);
        prof.kappa[0] = kb;
        if (M == 1) prof.kappa[0] = 1.0;
        profiles.push_back(prof);
    }
    const auto tuples = pareto_sweep(profiles, [&](const GapProfile& prof) {
        const DownlinkDesign dl =
            optimize_downlink(cs, world.sigma_sq_dl, nu, prof.kappa, world.p_dl_budget, cfg.eps_dl, cfg.tol);
        const UplinkDesign ul = optimize_uplink(cs, world.sigma_sq_ul, upsilon, prof.kappa, world.eta,
                                                world.p_ul_budget, cfg.eps_ul, cfg.tol);
        return L * L * dl.zeta + L * ul.zeta;
    });
    for (size_t i = 0; i < tuples.size(); ++i) {
        ParetoPoint pt;
        pt.label = "boundary";
        pt.kappa_bar = cfg.pareto_kappas[i];
        pt.zeta = tuples[i].zeta;
        pt.delta = tuples[i].delta;
        points.push_back(std::move(pt));
    }

    // Non-cooperative baselines, evaluated with the true interference.
    const PowerPlan full = baseline_full_power(cs, world.p_dl_budget, world.p_ul_budget, upsilon, world.sigma_sq_ul);
    auto add_baseline = [&](const std::string& label, const Vec& p_ul, const Vec& c) {
        ParetoPoint pt;
        pt.label = label;
        pt.delta = gaps_for_plan(full.p_dl, p_ul, c);
        for (double d : pt.delta) pt.zeta += d;
        points.push_back(std::move(pt));
    };
    add_baseline("DL-Full & UL-Full", full.p_ul, full.c);
    Vec p_ign(K, 0.0), p_max(K, 0.0), c_ign(M, 1.0), c_max(M, 1.0);
    for (int m = 0; m < M; ++m) {
        const auto devices = world.topo.cell_devices(m);
        const SingleCellUplink ign = uplink_ignore_interference(cs, m, upsilon, world.sigma_sq_ul[m],
                                                                world.p_ul_budget, world.eta[m], cfg.eps_ul, cfg.tol);
        const SingleCellUplink mx = uplink_max_interference(cs, m, upsilon, world.sigma_sq_ul[m],
                                                            world.p_ul_budget, world.eta[m], cfg.eps_ul, cfg.tol);
        for (size_t i = 0; i < devices.size(); ++i) {
            p_ign[devices[i]] = ign.p[i];
            p_max[devices[i]] = mx.p[i];
        }
        c_ign[m] = ign.c;
        c_max[m] = mx.c;
    }
    add_baseline("DL-Full & UL-IgnInter", p_ign, c_ign);
    add_baseline("DL-Full & UL-MaxInter", p_max, c_max);
    return points;
}

inline void write_pareto_csv(const std::vector<ParetoPoint>& points, int cells, const std::string& path) {
    std::string text = "label,kappa_bar,zeta";
    for (int m = 1; m <= cells; ++m) text += ",delta_" + std::to_string(m);
    text += "\n";
    for (const auto& pt : points) {
        text += pt.label + "," + detail::fmt_double(pt.kappa_bar) + "," + detail::fmt_double(pt.zeta);
        for (double d : pt.delta) text += "," + detail::fmt_double(d);
        text += "\n";
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

// ---- plot-data emission ----

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int col(const std::string& name) const {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        throw validation_error("metrics: missing column '" + name + "'");
    }
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("metrics: cannot open " + path);
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        size_t pos = 0;
        while (true) {
            const size_t next = line.find(',', pos);
            cells.push_back(line.substr(pos, next == std::string::npos ? next : next - pos));
            if (next == std::string::npos) break;
            pos = next + 1;
        }
        if (first) {
            t.header = cells;
            first = false;
        } else {
            t.rows.push_back(cells);
        }
    }
    return t;
}

// Emits tab-separated series from averaged metrics (or a pareto table for
// kind == pareto_region). Returns the emitted text.
inline std::string emit_plot_data(const CsvTable& table, const std::string& kind,
                                  const std::vector<std::string>& scheme_filter) {
    if (kind == "pareto_region") {
        std::string out;
        for (size_t i = 0; i < table.header.size(); ++i)
            out += table.header[i] + (i + 1 < table.header.size() ? "\t" : "\n");
        for (const auto& row : table.rows)
            for (size_t i = 0; i < row.size(); ++i) out += row[i] + (i + 1 < row.size() ? "\t" : "\n");
        return out;
    }
    if (kind != "loss_vs_round" && kind != "acc_vs_round" && kind != "avg_multicell")
        throw validation_error("emit: unknown kind '" + kind + "'");

    const int c_round = table.col("round");
    const int c_cell = table.col("cell");
    const int c_scheme = table.col("scheme");
    const int c_loss = table.col("train_loss");
    const int c_acc = table.col("test_acc");

    std::vector<std::string> schemes;
    std::vector<int> cells;
    std::vector<int> rounds;
    for (const auto& row : table.rows) {
        const std::string& s = row[c_scheme];
        if (!scheme_filter.empty() &&
            std::find(scheme_filter.begin(), scheme_filter.end(), s) == scheme_filter.end())
            continue;
        if (std::find(schemes.begin(), schemes.end(), s) == schemes.end()) schemes.push_back(s);
        const int cell = std::stoi(row[c_cell]);
        if (std::find(cells.begin(), cells.end(), cell) == cells.end()) cells.push_back(cell);
        const int round = std::stoi(row[c_round]);
        if (std::find(rounds.begin(), rounds.end(), round) == rounds.end()) rounds.push_back(round);
    }
    if (schemes.empty()) throw validation_error("emit: scheme filter matched nothing");
    std::sort(cells.begin(), cells.end());
    std::sort(rounds.begin(), rounds.end());

    auto value_at = [&](const std::string& scheme, int cell, int round, int col) -> double {
        for (const auto& row : table.rows)
            if (row[c_scheme] == scheme && std::stoi(row[c_cell]) == cell && std::stoi(row[c_round]) == round)
                return std::stod(row[col]);
        throw validation_error("emit: missing row for scheme '" + scheme + "'");
    };

    std::string out = "round";
    if (kind == "avg_multicell") {
        for (const auto& s : schemes) out += "\tloss:" + s + "\tacc:" + s;
        out += "\n";
        for (int t : rounds) {
            out += std::to_string(t);
            for (const auto& s : schemes) {
                double loss = 0.0, acc = 0.0;
                for (int cell : cells) {
                    loss += value_at(s, cell, t, c_loss);
                    acc += value_at(s, cell, t, c_acc);
                }
                out += "\t" + detail::fmt_double(loss / cells.size()) + "\t" +
                       detail::fmt_double(acc / cells.size());
            }
            out += "\n";
        }
        return out;
    }
    const int col = kind == "loss_vs_round" ? c_loss : c_acc;
    for (const auto& s : schemes)
        for (int cell : cells) out += "\t" + s + "|cell" + std::to_string(cell);
    out += "\n";
    for (int t : rounds) {
        out += std::to_string(t);
        for (const auto& s : schemes)
            for (int cell : cells) out += "\t" + detail::fmt_double(value_at(s, cell, t, col));
        out += "\n";
    }
    return out;
}

}  // namespace airfl
