// Batch driver: gen, label, train, eval, extract, bench.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cnet/config.hpp"
#include "cnet/dataset.hpp"
#include "cnet/evaluation.hpp"

using namespace cnet;
namespace fs = std::filesystem;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string config_path;
    std::string out = ".";
};

PipelineConfig load_config(const Globals& g) {
    PipelineConfig cfg;
    if (!g.config_path.empty()) cfg = config_from_json(read_file(g.config_path));
    if (g.seed_given) {
        cfg.seed = g.seed;
        cfg.train.rng_seed = g.seed;
    }
    return cfg;
}

std::string out_path(const Globals& g, const std::string& name) {
    fs::create_directories(g.out);
    return (fs::path(g.out) / name).string();
}

std::vector<Record> read_records(const std::vector<std::string>& paths) {
    std::vector<Record> out;
    for (const auto& p : paths) {
        auto part = from_jsonl(read_file(p));
        out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    return out;
}

void progress_bar(int done, int total) {
    if (done == total || done % 50 == 0) std::fprintf(stderr, "\r  %d/%d", done, total);
    if (done == total) std::fprintf(stderr, "\n");
}

void write_manifest(const Globals& g, const std::string& name, const DatasetReport& rep, const Regime& regime,
                    const PipelineConfig& cfg) {
    write_file(out_path(g, name), report_json(rep, regime, cfg.seed, config_hash(cfg)));
    std::printf("%d/%d instances written, %zu skipped; zero labels %ld of %ld\n", rep.written, rep.requested,
                rep.skipped.size(), rep.zeros, rep.ones + rep.zeros);
    for (const auto& [index, why] : rep.skipped) std::fprintf(stderr, "skipped instance %d: %s\n", index, why.c_str());
}

LabelOptions label_options(const PipelineConfig& cfg) {
    LabelOptions o;
    o.solver = cfg.solver;
    o.label = cfg.label;
    o.reduce = cfg.label_reduce;
    return o;
}

ReduceFn reduce_by_name(const std::string& name) {
    if (name == "df") return make_reduce(ReduceMethod::DeletionFilter);
    if (name == "qx") return make_reduce(ReduceMethod::QuickXplain);
    const ReduceFn qx = make_reduce(ReduceMethod::QuickXplain);
    return [qx](const Subgraph& s, const SolveContext& c, Precondition p) { return expert_reduce(s, c, p, qx); };
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conflict extraction for factored NLPs with a graph neural network"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "Master seed (overrides the config file)")
        ->each([&](const std::string&) { g.seed_given = true; });
    app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--out", g.out, "Output directory");

    std::string regime_name;
    int n = 0;
    bool also_label = false;
    auto* gen = app.add_subcommand("gen", "Generate scenes, action sequences and compiled graphs");
    gen->add_option("--regime", regime_name, "train, +blocks, +robots or +actions")->required();
    gen->add_option("--n", n, "Number of instances")->required()->check(CLI::NonNegativeNumber);
    gen->add_flag("--label", also_label, "Label while generating");

    std::vector<std::string> data_paths;
    auto* label = app.add_subcommand("label", "Label generated instances with minimal conflicts");
    label->add_option("--data", data_paths, "Generated JSONL")->required()->check(CLI::ExistingFile);

    int epochs = -1;
    auto* train_cmd = app.add_subcommand("train", "Train the variable classifier");
    train_cmd->add_option("--data", data_paths, "Labeled JSONL (repeatable)")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--epochs", epochs, "Override train.epochs");

    std::string model_path;
    double delta = 0.5;
    auto* eval = app.add_subcommand("eval", "Accuracy pair and subgraph-prediction ratios");
    eval->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
    eval->add_option("--data", data_paths, "Labeled JSONL (repeatable; one report each)")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--threshold", delta, "Classification threshold");

    std::string reduce_name = "qx";
    int index = -1;
    bool find_all = false;
    auto* extract = app.add_subcommand("extract", "Score-guided conflict extraction");
    extract->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
    extract->add_option("--data", data_paths)->required()->check(CLI::ExistingFile);
    extract->add_option("--reduce", reduce_name, "qx, df or expert")->check(CLI::IsMember({"qx", "df", "expert"}));
    extract->add_option("--index", index, "Only this record (default: all)");
    extract->add_flag("--find-all", find_all, "Keep searching after the first conflict");

    int limit = -1;
    auto* bench_cmd = app.add_subcommand("bench", "Solve counts and times of every extraction method");
    bench_cmd->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
    bench_cmd->add_option("--data", data_paths)->required()->check(CLI::ExistingFile);
    bench_cmd->add_option("--limit", limit, "Use the first N infeasible instances");

    CLI11_PARSE(app, argc, argv);

    try {
        PipelineConfig cfg = load_config(g);
        const std::string hash = config_hash(cfg);

        if (app.got_subcommand(gen)) {
            const Regime regime = regime_by_name(regime_name);
            DatasetReport rep;
            std::vector<Record> recs = generate_dataset(regime, n, cfg.seed, &rep);
            if (also_label) recs = label_dataset(std::move(recs), label_options(cfg), &rep, progress_bar);
            write_file(out_path(g, "data.jsonl"), to_jsonl(recs));
            write_manifest(g, "manifest.json", rep, regime, cfg);
        } else if (app.got_subcommand(label)) {
            std::vector<Record> recs = read_records(data_paths);
            const Regime regime = regime_by_name(recs.empty() ? "train" : recs.front().regime);
            DatasetReport rep;
            recs = label_dataset(std::move(recs), label_options(cfg), &rep, progress_bar);
            write_file(out_path(g, "labeled.jsonl"), to_jsonl(recs));
            write_manifest(g, "label_manifest.json", rep, regime, cfg);
        } else if (app.got_subcommand(train_cmd)) {
            if (epochs > 0) cfg.train.epochs = epochs;
            const auto data = labeled_instances(read_records(data_paths));
            const TrainResult r = train(data, cfg.gnn, cfg.train);
            write_file(out_path(g, "model.bin"), save_model(r.model));
            write_file(out_path(g, "train_log.csv"), training_log_csv(r.log));
            const nlohmann::json m = {{"config_hash", config_hash(cfg)},
                                      {"instances", data.size()},
                                      {"best_epoch", r.best_epoch},
                                      {"pos_weight", r.pos_weight},
                                      {"parameters", r.model.num_parameters()}};
            write_file(out_path(g, "train_manifest.json"), m.dump(2) + "\n");
            const EpochLog& best = r.log[static_cast<std::size_t>(r.best_epoch - 1)];
            std::printf("best epoch %d: val loss %.4f, accuracy (%.1f, %.1f)\n", r.best_epoch, best.val_loss,
                        best.acc_feasible, best.acc_infeasible);
        } else if (app.got_subcommand(eval)) {
            const GnnModel model = load_model(read_file(model_path));
            nlohmann::json all = nlohmann::json::object();
            std::printf("%-28s %16s %12s %14s %12s\n", "dataset", "accuracy", "found/total", "minimal/found",
                        "false-inf");
            for (const auto& p : data_paths) {
                const EvalReport r = evaluate(model, labeled_instances(read_records({p})), cfg.solver, delta);
                all[fs::path(p).filename().string()] = nlohmann::json::parse(eval_json(r, hash));
                std::printf("%-28s   (%5.1f, %5.1f) %12.3f %14.3f %12.3f\n", fs::path(p).filename().string().c_str(),
                            r.accuracy.feasible, r.accuracy.infeasible, r.ratios.found_over_total(),
                            r.ratios.minimal_over_found(), r.ratios.false_infeasible_fraction());
            }
            write_file(out_path(g, "eval.json"), all.dump(2) + "\n");
        } else if (app.got_subcommand(extract)) {
            const GnnModel model = load_model(read_file(model_path));
            const auto recs = read_records(data_paths);
            Solver solver(cfg.solver);
            const SolveContext ctx{&solver, nullptr};
            const ReduceFn reduce = reduce_by_name(reduce_name);
            ExtractConfig ec = cfg.extract;
            ec.find_all = ec.find_all || find_all;
            std::string out;
            for (const auto& r : recs) {
                if (index >= 0 && r.index != index) continue;
                solver.reset_count();
                const auto found = gnn_extract(r.graph, forward(model, r.graph), ctx, reduce, ec);
                nlohmann::json conflicts = nlohmann::json::array();
                for (const auto& c : found) conflicts.push_back(c.variables());
                out += nlohmann::json{{"index", r.index}, {"conflicts", conflicts}, {"solves", solver.count_solves()}}
                           .dump() +
                       "\n";
                std::printf("instance %d: %zu conflict(s), %lld solves\n", r.index, found.size(),
                            static_cast<long long>(solver.count_solves()));
            }
            write_file(out_path(g, "extract.jsonl"), out);
        } else if (app.got_subcommand(bench_cmd)) {
            const GnnModel model = load_model(read_file(model_path));
            std::vector<LabeledInstance> data;
            for (auto& inst : labeled_instances(read_records(data_paths))) {
                if (inst.conflicts.empty()) continue;
                if (limit >= 0 && static_cast<int>(data.size()) >= limit) break;
                data.push_back(std::move(inst));
            }
            const BenchReport rep = bench(model, data, cfg.solver);
            write_file(out_path(g, "bench.csv"), bench_csv(rep) + "# config_hash=" + hash + "\n");
            write_file(out_path(g, "bench_timing.csv"), bench_timing_csv(rep));
            std::printf("%s", bench_table(rep).c_str());
            for (const auto& row : rep.rows) {
                if (row.failures) return 2;
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
