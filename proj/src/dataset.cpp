#include "cnet/dataset.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include "cnet/graph_json.hpp"

namespace cnet {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void tally(DatasetReport& r, const Record& rec) {
    ++r.written;
    if (!rec.conflicts.empty()) ++r.infeasible;
    for (int y : rec.labels) (y ? r.ones : r.zeros)++;
}

}  // namespace

std::uint64_t instance_seed(std::uint64_t dataset_seed, int index) {
    return splitmix(splitmix(dataset_seed) ^ static_cast<std::uint64_t>(index));
}

Record generate_instance(const Regime& regime, std::uint64_t dataset_seed, int index) {
    Record rec;
    rec.regime = regime.name;
    rec.index = index;
    rec.seed = instance_seed(dataset_seed, index);
    std::mt19937_64 rng(rec.seed);
    const std::uint64_t scene_seed = rng();
    const std::uint64_t action_seed = rng();
    const int length = std::uniform_int_distribution<int>(regime.min_length, regime.max_length)(rng);
    const Scene scene = random_scene(regime.n_blocks, regime.n_obstacles, regime.n_robots, scene_seed);
    const ActionSequence actions = random_actions(scene, length, action_seed);
    for (const auto& a : actions) rec.actions.push_back(to_string(a));
    rec.graph = compile(scene, actions);
    return rec;
}

std::string label_record(Record& record, const LabelOptions& options) {
    Solver solver(options.solver);
    ComponentCache cache;
    const SolveContext ctx{&solver, &cache};
    LabeledInstance li = label_variables(record.graph, ctx, make_reduce(options.reduce), options.label);
    if (options.verify) {
        Solver fresh(options.solver);
        const SolveContext check{&fresh, nullptr};
        const double margin = 10.0 * options.solver.feas_tol;
        for (const auto& c : li.conflicts) {
            const Subgraph sub = induced_subgraph(record.graph, c);
            const SolveOutcome out = fresh.solve(sub);
            std::string at = "conflict of " + std::to_string(c.size()) + " variables";
            if (out.feasible) return at + " is feasible on re-solve";
            if (out.max_violation < margin) return at + " has violation below 10 x feas_tol";
            if (!check_minimal(sub, check)) return at + " is not minimal";
        }
    }
    record.labels = std::move(li.labels);
    record.conflicts = std::move(li.conflicts);
    record.labeled = true;
    return {};
}

std::vector<Record> generate_dataset(const Regime& regime, int n, std::uint64_t seed, DatasetReport* report) {
    if (n < 0) throw Error("dataset size must be >= 0");
    std::vector<Record> out;
    DatasetReport local;
    DatasetReport& r = report ? *report : local;
    r.requested += n;
    for (int i = 0; i < n; ++i) {
        try {
            out.push_back(generate_instance(regime, seed, i));
            ++r.written;
        } catch (const Error& e) {
            r.skipped.emplace_back(i, std::string("generation failed: ") + e.what());
        }
    }
    return out;
}

std::vector<Record> label_dataset(std::vector<Record> records, const LabelOptions& options, DatasetReport* report,
                                  const ProgressFn& progress) {
    DatasetReport local;
    DatasetReport& r = report ? *report : local;
    if (r.requested == 0) r.requested = static_cast<int>(records.size());
    r.written = 0;
    std::vector<Record> out;
    out.reserve(records.size());
    int done = 0;
    for (Record& rec : records) {
        std::string why;
        try {
            why = label_record(rec, options);
        } catch (const SolverFailure& e) {
            why = std::string("solver failure: ") + e.what();
        }
        if (why.empty()) {
            tally(r, rec);
            out.push_back(std::move(rec));
        } else {
            r.skipped.emplace_back(rec.index, why);
        }
        if (progress) progress(++done, static_cast<int>(records.size()));
    }
    return out;
}

std::vector<Record> build_dataset(const Regime& regime, int n, std::uint64_t seed, const LabelOptions& options,
                                  DatasetReport* report, const ProgressFn& progress) {
    DatasetReport local;
    DatasetReport& r = report ? *report : local;
    std::vector<Record> raw = generate_dataset(regime, n, seed, &r);
    return label_dataset(std::move(raw), options, &r, progress);
}

std::string record_to_json(const Record& rec) {
    nlohmann::json j = {{"regime", rec.regime},     {"index", rec.index},
                        {"seed", rec.seed},         {"actions", rec.actions},
                        {"graph", graph_to_json(rec.graph)}};
    if (rec.labeled) {
        j["labels"] = rec.labels;
        j["conflicts"] = rec.conflicts;
    }
    return j.dump();
}

std::string to_jsonl(const std::vector<Record>& records) {
    std::string out;
    for (const auto& r : records) {
        out += record_to_json(r);
        out += '\n';
    }
    return out;
}

std::vector<Record> from_jsonl(std::string_view text) {
    std::vector<Record> out;
    std::size_t pos = 0;
    int line_no = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const std::string_view line = text.substr(pos, end - pos);
        ++line_no;
        const std::string where = "line " + std::to_string(line_no);
        if (line.find_first_not_of(" \t\r") != std::string_view::npos) {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line.begin(), line.end());
            } catch (const nlohmann::json::parse_error& e) {
                throw ParseError(where + ": " + e.what(), static_cast<std::int64_t>(pos));
            }
            Record rec;
            try {
                rec.regime = j.at("regime").get<std::string>();
                rec.index = j.at("index").get<int>();
                rec.seed = j.at("seed").get<std::uint64_t>();
                rec.actions = j.at("actions").get<std::vector<std::string>>();
                rec.graph = graph_from_json(j.at("graph"), where + ": graph");
                if (j.contains("labels")) {
                    rec.labeled = true;
                    rec.labels = j.at("labels").get<std::vector<int>>();
                    rec.conflicts = j.at("conflicts").get<std::vector<std::vector<int>>>();
                }
            } catch (const nlohmann::json::exception& e) {
                throw ParseError(where + ": " + e.what(), static_cast<std::int64_t>(pos));
            }
            if (rec.labeled &&
                rec.labels != labels_from_conflicts(rec.graph.num_variables(), rec.conflicts)) {
                throw ParseError(where + ": labels disagree with stored conflicts", static_cast<std::int64_t>(pos));
            }
            out.push_back(std::move(rec));
        }
        pos = end + 1;
    }
    return out;
}

std::vector<LabeledInstance> labeled_instances(const std::vector<Record>& records) {
    std::vector<LabeledInstance> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        if (!r.labeled) throw Error("record " + std::to_string(r.index) + " is not labeled");
        out.push_back({r.graph, r.labels, r.conflicts});
    }
    return out;
}

std::string report_json(const DatasetReport& report, const Regime& regime, std::uint64_t seed,
                        const std::string& config_hash) {
    nlohmann::json skipped = nlohmann::json::array();
    for (const auto& [i, why] : report.skipped) skipped.push_back({{"index", i}, {"reason", why}});
    const long total = report.ones + report.zeros;
    nlohmann::json j = {
        {"regime",
         {{"name", regime.name},
          {"blocks", regime.n_blocks},
          {"obstacles", regime.n_obstacles},
          {"robots", regime.n_robots},
          {"min_length", regime.min_length},
          {"max_length", regime.max_length}}},
        {"seed", seed},
        {"config_hash", config_hash},
        {"requested", report.requested},
        {"written", report.written},
        {"skipped", skipped},
        {"infeasible_instances", report.infeasible},
        {"labels_one", report.ones},
        {"labels_zero", report.zeros},
        {"zero_fraction", total ? static_cast<double>(report.zeros) / static_cast<double>(total) : 0.0},
    };
    return j.dump(2) + "\n";
}

std::string fingerprint(std::string_view text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + path);
}

}  // namespace cnet
