#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cnet/conflicts.hpp"
#include "cnet/graph.hpp"

namespace cnet {

struct GnnHyper {
    int n_f = 16;     // raw feature arity: 6 class slots + geometry + padding
    int n_z = 64;     // variable state width
    int n_mu = 64;    // message width
    int hidden = 64;  // hidden width of every two-layer network
    int rounds = 3;   // message-passing rounds K
};

/// Message networks are keyed by constraint kind and scope arity.
struct MessageKey {
    ConstraintKind kind = ConstraintKind::Equal;
    int arity = 2;
    auto operator<=>(const MessageKey&) const = default;
};

std::string to_string(const MessageKey& key);

/// Two-layer perceptron: in -> hidden (ReLU) -> out. Weights are row-major
/// (fan-in x fan-out).
struct Mlp {
    int in = 0, hidden = 0, out = 0;
    std::vector<double> w1, b1, w2, b2;
};

struct GnnModel {
    GnnHyper hyper;
    Mlp embed;
    Mlp update;
    Mlp classifier;
    std::map<MessageKey, Mlp> messages;

    /// Every parameter tensor in canonical order, with stable names.
    std::vector<std::pair<std::string, std::vector<double>*>> tensors();
    std::vector<std::pair<std::string, const std::vector<double>*>> tensors() const;
    std::size_t num_parameters() const;
};

/// Message keys (arity >= 2) used by a graph; unary constraints never carry
/// messages.
std::vector<MessageKey> message_vocabulary(const FactoredNlp& graph);

GnnModel make_model(const GnnHyper& hyper, const std::vector<MessageKey>& vocabulary, std::uint64_t seed);
/// Same structure with every parameter zero (gradient and optimizer buffers).
GnnModel zeros_like(const GnnModel& model);

/// Row-major |X| x n_f: one-hot class (6 slots), geometry, zero padding.
std::vector<double> init_features(const FactoredNlp& graph, int n_f);

/// Per-variable scores in (0, 1); low means "part of a conflict".
std::vector<double> forward(const GnnModel& model, const FactoredNlp& graph);
std::vector<double> forward_logits(const GnnModel& model, const FactoredNlp& graph);

/// Messages of one round, per constraint id (empty for unary constraints).
std::vector<std::vector<double>> round_messages(const GnnModel& model, const FactoredNlp& graph, int round);

/// Mean weighted binary cross entropy; pos_weight scales the y = 0 terms.
double loss(const std::vector<double>& scores, const std::vector<int>& labels, double pos_weight);
double loss_from_logits(const std::vector<double>& logits, const std::vector<int>& labels, double pos_weight);

/// Loss (mean over the graph's variables) and its parameter gradient, added
/// into `grad` scaled by `scale`.
double loss_and_gradient(const GnnModel& model, const FactoredNlp& graph, const std::vector<int>& labels,
                         double pos_weight, GnnModel& grad, double scale = 1.0);

/// Max relative error between reverse-mode and central-difference gradients
/// over a sample of parameters (all of them when sample <= 0). Parameters whose
/// perturbation flips a ReLU or max-aggregation choice are skipped.
double grad_check(const GnnModel& model, const FactoredNlp& graph, const std::vector<int>& labels,
                  double pos_weight = 1.0, int sample = 0, std::uint64_t seed = 0);

struct AccuracyPair {
    double feasible = 0.0;    // % of y = 1 variables with score >= delta
    double infeasible = 0.0;  // % of y = 0 variables with score < delta
    long n_feasible = 0;
    long n_infeasible = 0;
};

AccuracyPair accuracy(const std::vector<double>& scores, const std::vector<int>& labels, double delta = 0.5);
void accumulate(AccuracyPair& total, const std::vector<double>& scores, const std::vector<int>& labels,
                double delta = 0.5);

struct TrainConfig {
    int epochs = 50;
    int batch_size = 16;
    double learning_rate = 1e-3;
    double pos_weight = 0.0;  // <= 0: ratio of class counts in the training split
    std::uint64_t rng_seed = 0;
    double validation_fraction = 0.1;
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double acc_feasible = 0.0;
    double acc_infeasible = 0.0;
};

struct TrainResult {
    GnnModel model;  // best validation snapshot
    std::vector<EpochLog> log;
    int best_epoch = 0;
    double pos_weight = 1.0;
};

TrainResult train(const std::vector<LabeledInstance>& data, const GnnHyper& hyper, const TrainConfig& cfg);

std::string training_log_csv(const std::vector<EpochLog>& log);

std::string save_model(const GnnModel& model);
GnnModel load_model(std::string_view bytes);

}  // namespace cnet
