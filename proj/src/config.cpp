#include "cnet/config.hpp"

#include <json.hpp>

#include "cnet/dataset.hpp"

namespace cnet {

namespace {

using nlohmann::json;

json to_doc(const PipelineConfig& c) {
    return {
        {"seed", c.seed},
        {"solver",
         {{"feas_tol", c.solver.feas_tol},
          {"max_outer_iters", c.solver.max_outer_iters},
          {"max_inner_iters", c.solver.max_inner_iters},
          {"restarts", c.solver.restarts},
          {"penalty_init", c.solver.penalty_init},
          {"penalty_growth", c.solver.penalty_growth},
          {"init_noise", c.solver.init_noise},
          {"noise_growth", c.solver.noise_growth},
          {"rng_seed", c.solver.rng_seed}}},
        {"label",
         {{"max_conflicts", c.label.max_conflicts},
          {"max_nodes", c.label.max_nodes},
          {"reduce", c.label_reduce == ReduceMethod::QuickXplain ? "quickxplain" : "deletion_filter"}}},
        {"gnn",
         {{"n_f", c.gnn.n_f},
          {"n_z", c.gnn.n_z},
          {"n_mu", c.gnn.n_mu},
          {"hidden", c.gnn.hidden},
          {"rounds", c.gnn.rounds}}},
        {"train",
         {{"epochs", c.train.epochs},
          {"batch_size", c.train.batch_size},
          {"learning_rate", c.train.learning_rate},
          {"pos_weight", c.train.pos_weight},
          {"validation_fraction", c.train.validation_fraction}}},
        {"extract",
         {{"delta0", c.extract.delta0},
          {"delta_rate", c.extract.delta_rate},
          {"delta_cap", c.extract.delta_cap},
          {"find_all", c.extract.find_all}}},
    };
}

void check_keys(const json& patch, const json& schema, const std::string& path) {
    if (!patch.is_object()) throw Error("config: " + (path.empty() ? std::string("document") : path) + " must be an object");
    for (const auto& [key, value] : patch.items()) {
        const std::string here = path.empty() ? key : path + "." + key;
        if (!schema.contains(key)) throw Error("config: unknown key '" + here + "'");
        if (schema.at(key).is_object()) check_keys(value, schema.at(key), here);
    }
}

}  // namespace

PipelineConfig config_from_json(std::string_view text) {
    json patch;
    try {
        patch = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config: ") + e.what(), static_cast<std::int64_t>(e.byte));
    }
    const PipelineConfig defaults;
    json doc = to_doc(defaults);
    check_keys(patch, doc, "");
    doc.merge_patch(patch);

    PipelineConfig c;
    try {
        c.seed = doc.at("seed").get<std::uint64_t>();
        const json& s = doc.at("solver");
        c.solver.feas_tol = s.at("feas_tol").get<double>();
        c.solver.max_outer_iters = s.at("max_outer_iters").get<int>();
        c.solver.max_inner_iters = s.at("max_inner_iters").get<int>();
        c.solver.restarts = s.at("restarts").get<int>();
        c.solver.penalty_init = s.at("penalty_init").get<double>();
        c.solver.penalty_growth = s.at("penalty_growth").get<double>();
        c.solver.init_noise = s.at("init_noise").get<double>();
        c.solver.noise_growth = s.at("noise_growth").get<double>();
        c.solver.rng_seed = s.at("rng_seed").get<std::uint64_t>();
        const json& l = doc.at("label");
        c.label.max_conflicts = l.at("max_conflicts").get<int>();
        c.label.max_nodes = l.at("max_nodes").get<int>();
        const std::string reduce = l.at("reduce").get<std::string>();
        if (reduce == "quickxplain") {
            c.label_reduce = ReduceMethod::QuickXplain;
        } else if (reduce == "deletion_filter") {
            c.label_reduce = ReduceMethod::DeletionFilter;
        } else {
            throw Error("config: label.reduce must be quickxplain or deletion_filter");
        }
        const json& g = doc.at("gnn");
        c.gnn.n_f = g.at("n_f").get<int>();
        c.gnn.n_z = g.at("n_z").get<int>();
        c.gnn.n_mu = g.at("n_mu").get<int>();
        c.gnn.hidden = g.at("hidden").get<int>();
        c.gnn.rounds = g.at("rounds").get<int>();
        const json& t = doc.at("train");
        c.train.epochs = t.at("epochs").get<int>();
        c.train.batch_size = t.at("batch_size").get<int>();
        c.train.learning_rate = t.at("learning_rate").get<double>();
        c.train.pos_weight = t.at("pos_weight").get<double>();
        c.train.validation_fraction = t.at("validation_fraction").get<double>();
        const json& e = doc.at("extract");
        c.extract.delta0 = e.at("delta0").get<double>();
        c.extract.delta_rate = e.at("delta_rate").get<double>();
        c.extract.delta_cap = e.at("delta_cap").get<double>();
        c.extract.find_all = e.at("find_all").get<bool>();
    } catch (const json::exception& ex) {
        throw Error(std::string("config: ") + ex.what());
    }
    c.solver.validate();
    c.train.rng_seed = c.seed;
    return c;
}

std::string config_to_json(const PipelineConfig& cfg) { return to_doc(cfg).dump(2) + "\n"; }

std::string config_hash(const PipelineConfig& cfg) { return fingerprint(to_doc(cfg).dump()); }

}  // namespace cnet
