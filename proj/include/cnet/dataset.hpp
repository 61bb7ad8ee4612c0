#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "cnet/conflicts.hpp"
#include "cnet/domain.hpp"

namespace cnet {

/// One dataset line. Unlabeled records (gen output) carry no labels.
struct Record {
    std::string regime;
    int index = 0;
    std::uint64_t seed = 0;  // per-instance seed, derived from (dataset seed, index)
    std::vector<std::string> actions;
    FactoredNlp graph;
    bool labeled = false;
    std::vector<int> labels;
    std::vector<std::vector<int>> conflicts;
};

std::uint64_t instance_seed(std::uint64_t dataset_seed, int index);

/// Scene, action sequence and compiled graph for one index.
Record generate_instance(const Regime& regime, std::uint64_t dataset_seed, int index);

struct LabelOptions {
    SolverConfig solver;
    LabelConfig label;
    ReduceMethod reduce = ReduceMethod::QuickXplain;
    bool verify = true;  // re-solve every stored conflict from scratch
};

/// Labels in place. Returns an empty string on success, otherwise why the
/// record was rejected (a stored conflict that is not minimal, or whose
/// violation is below 10 x feas_tol).
std::string label_record(Record& record, const LabelOptions& options);

struct DatasetReport {
    int requested = 0;
    int written = 0;
    std::vector<std::pair<int, std::string>> skipped;  // (index, reason)
    int infeasible = 0;
    long ones = 0;
    long zeros = 0;
};

using ProgressFn = std::function<void(int done, int total)>;

/// gen + label over indices [0, n). Rejected instances are reported, not written.
std::vector<Record> build_dataset(const Regime& regime, int n, std::uint64_t seed, const LabelOptions& options,
                                  DatasetReport* report = nullptr, const ProgressFn& progress = {});

std::vector<Record> generate_dataset(const Regime& regime, int n, std::uint64_t seed, DatasetReport* report = nullptr);
std::vector<Record> label_dataset(std::vector<Record> records, const LabelOptions& options,
                                  DatasetReport* report = nullptr, const ProgressFn& progress = {});

std::string record_to_json(const Record& record);
std::string to_jsonl(const std::vector<Record>& records);
/// Throws ParseError naming the offending line (position = byte offset of the line).
std::vector<Record> from_jsonl(std::string_view text);

/// Requires labeled records.
std::vector<LabeledInstance> labeled_instances(const std::vector<Record>& records);

std::string report_json(const DatasetReport& report, const Regime& regime, std::uint64_t seed,
                        const std::string& config_hash);

/// 16 hex digits of FNV-1a over `text`.
std::string fingerprint(std::string_view text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

}  // namespace cnet
