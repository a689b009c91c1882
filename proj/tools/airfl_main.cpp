#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <string>

#include "airfl/harness.hpp"
#include "airfl/selftest.hpp"

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-cell over-the-air federated learning simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    std::string metrics_path;
    std::string kind;
    std::string schemes_csv;
    uint64_t seed_override = 0;
    bool seed_given = false;

    auto* cmd_run = app.add_subcommand("run", "Run the experiment and write metrics.csv / metrics_avg.csv");
    cmd_run->add_option("--config", config_path, "experiment config file")->required();
    cmd_run->add_option("--seed", seed_override, "override the config seed")->each([&](const std::string&) {
        seed_given = true;
    });
    cmd_run->add_option("--out", out_dir, "output directory (default .)");

    auto* cmd_pareto = app.add_subcommand("pareto", "Sweep the profile list and write pareto.csv");
    cmd_pareto->add_option("--config", config_path, "experiment config file")->required();
    cmd_pareto->add_option("--seed", seed_override, "override the config seed")->each([&](const std::string&) {
        seed_given = true;
    });
    cmd_pareto->add_option("--out", out_dir, "output directory (default .)");

    auto* cmd_self = app.add_subcommand("selftest", "Run the embedded oracle suite");

    auto* cmd_emit = app.add_subcommand("emit", "Convert metrics to plot-ready TSV series");
    cmd_emit->add_option("--kind", kind, "loss_vs_round | acc_vs_round | avg_multicell | pareto_region")
        ->required();
    cmd_emit->add_option("--in", metrics_path, "metrics CSV (metrics_avg.csv or pareto.csv)")->required();
    cmd_emit->add_option("--schemes", schemes_csv, "comma-separated scheme filter");
    cmd_emit->add_option("--out", out_dir, "output directory (default .)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        std::filesystem::create_directories(out_dir);
        if (cmd_run->parsed()) {
            airfl::ExperimentConfig cfg = airfl::load_config(config_path);
            if (seed_given) cfg.seed = seed_override;
            const airfl::ExperimentResult result = airfl::run_experiment(cfg);
            airfl::write_metrics_csv(result.rows, out_dir + "/metrics.csv", true);
            airfl::write_metrics_csv(result.avg_rows, out_dir + "/metrics_avg.csv", false);
            std::cout << "wrote " << out_dir << "/metrics.csv and " << out_dir << "/metrics_avg.csv\n";
        } else if (cmd_pareto->parsed()) {
            airfl::ExperimentConfig cfg = airfl::load_config(config_path);
            if (seed_given) cfg.seed = seed_override;
            const auto points = airfl::run_pareto(cfg);
            const int cells = static_cast<int>(cfg.geometry.bs_positions.size());
            airfl::write_pareto_csv(points, cells, out_dir + "/pareto.csv");
            std::cout << "wrote " << out_dir << "/pareto.csv\n";
        } else if (cmd_self->parsed()) {
            if (!airfl::selftest(std::cout)) return 3;
        } else if (cmd_emit->parsed()) {
            std::vector<std::string> filter;
            if (!schemes_csv.empty())
                for (const auto& s : airfl::detail::split(schemes_csv, ','))
                    if (!s.empty()) filter.push_back(s);
            if (cmd_emit->count("--schemes") > 0 && filter.empty())
                throw airfl::validation_error("emit: empty scheme filter");
            const airfl::CsvTable table = airfl::read_csv(metrics_path);
            const std::string text = airfl::emit_plot_data(table, kind, filter);
            const std::string path = out_dir + "/" + kind + ".tsv";
            write_text(path, text);
            std::cout << "wrote " << path << "\n";
        }
    } catch (const airfl::validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
