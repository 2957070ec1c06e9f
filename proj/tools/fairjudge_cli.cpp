// fairjudge: batch CLI over the judging toolkit. Subcommands compose through
// JSONL files only; every run is reproducible from its --seed and emits a
// manifest with resolved options and input digests next to its output.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fairjudge/fairjudge.hpp"

namespace fj = fairjudge;
using fj::json;

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!fj::trim(line).empty()) lines.push_back(line);
    }
    return lines;
}

std::string file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx",
                  static_cast<unsigned long long>(fj::fnv1a64(ss.str())));
    return buf;
}

void write_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    json j;
    in >> j;
    return j;
}

// Resolved options shared across subcommands. Values start from built-in
// defaults, may be replaced by the --config file, and are finally overridden
// by command-line flags.
struct GlobalOptions {
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::vector<int> score_range = {1, 10};
    int both_bad_threshold = 2;
    std::string parse_mode = "full";
    bool strict_parse = true;
    int k = 8;
    std::size_t n = 1000;
    std::size_t embedding_dim = 256;

    fj::RecordConfig record_config() const {
        fj::RecordConfig cfg;
        cfg.score_range = {score_range.at(0), score_range.at(1)};
        cfg.both_bad_threshold = both_bad_threshold;
        return cfg;
    }
    fj::RewardOptions reward_options() const {
        return {parse_mode == "fast" ? fj::ParseMode::Fast : fj::ParseMode::Full, strict_parse};
    }
    json to_json() const {
        json j;
        j["seed"] = seed;
        j["score_range"] = score_range;
        j["both_bad_threshold"] = both_bad_threshold;
        j["mode"] = parse_mode;
        j["strict_parse"] = strict_parse;
        j["k"] = k;
        j["n"] = n;
        j["embedding_dim"] = embedding_dim;
        return j;
    }
};

struct TrainOptions {
    int sft_epochs = 20;
    int dpo_epochs = 20;
    int grpo_epochs = 20;
    double learning_rate = 0.5;
    int group_size = 8;
    double beta = 0.1;
    double epsilon = 0.2;
    double lambda_kl = 0.01;
    double lambda_dpo = 1.0;
    double lambda_grpo = 1.0;
    std::string ref_refresh = "per-stage";

    fj::TrainConfig to_config(std::uint64_t seed) const {
        fj::TrainConfig cfg;
        cfg.sft_epochs = sft_epochs;
        cfg.dpo_epochs = dpo_epochs;
        cfg.grpo_epochs = grpo_epochs;
        cfg.learning_rate = learning_rate;
        cfg.group_size = group_size;
        cfg.seed = seed;
        cfg.beta = beta;
        cfg.epsilon = epsilon;
        cfg.lambda_kl = lambda_kl;
        cfg.weights = {lambda_dpo, lambda_grpo};
        cfg.ref_refresh = ref_refresh == "never" ? fj::TrainConfig::RefRefresh::Never
                                                 : fj::TrainConfig::RefRefresh::PerStage;
        return cfg;
    }
    json to_json() const {
        json j;
        j["sft_epochs"] = sft_epochs;
        j["dpo_epochs"] = dpo_epochs;
        j["grpo_epochs"] = grpo_epochs;
        j["learning_rate"] = learning_rate;
        j["group_size"] = group_size;
        j["beta"] = beta;
        j["epsilon"] = epsilon;
        j["lambda_kl"] = lambda_kl;
        j["lambda_dpo"] = lambda_dpo;
        j["lambda_grpo"] = lambda_grpo;
        j["ref_refresh"] = ref_refresh;
        return j;
    }
};

template <class T>
void maybe_set(const json& j, const char* key, T& target) {
    if (j.contains(key)) target = j.at(key).get<T>();
}

void apply_config_file(const std::filesystem::path& path, GlobalOptions& g, TrainOptions& t) {
    json j = load_json_file(path);
    if (!j.is_object()) throw std::runtime_error("config file must hold a JSON object");
    if (j.contains("seed")) {
        g.seed = j.at("seed").get<std::uint64_t>();
        g.seed_given = true;
    }
    maybe_set(j, "score_range", g.score_range);
    maybe_set(j, "both_bad_threshold", g.both_bad_threshold);
    maybe_set(j, "mode", g.parse_mode);
    maybe_set(j, "strict_parse", g.strict_parse);
    maybe_set(j, "k", g.k);
    maybe_set(j, "n", g.n);
    maybe_set(j, "embedding_dim", g.embedding_dim);
    if (j.contains("train")) {
        const json& tr = j.at("train");
        maybe_set(tr, "sft_epochs", t.sft_epochs);
        maybe_set(tr, "dpo_epochs", t.dpo_epochs);
        maybe_set(tr, "grpo_epochs", t.grpo_epochs);
        maybe_set(tr, "learning_rate", t.learning_rate);
        maybe_set(tr, "group_size", t.group_size);
        maybe_set(tr, "beta", t.beta);
        maybe_set(tr, "epsilon", t.epsilon);
        maybe_set(tr, "lambda_kl", t.lambda_kl);
        maybe_set(tr, "lambda_dpo", t.lambda_dpo);
        maybe_set(tr, "lambda_grpo", t.lambda_grpo);
        maybe_set(tr, "ref_refresh", t.ref_refresh);
    }
}

void write_manifest(const std::string& subcommand, const GlobalOptions& g,
                    const std::vector<std::filesystem::path>& inputs,
                    const std::vector<std::filesystem::path>& outputs,
                    const json& extra = json::object()) {
    if (outputs.empty()) return;
    json j;
    j["tool"] = "fairjudge";
    j["subcommand"] = subcommand;
    j["config"] = g.to_json();
    for (auto& [key, value] : extra.items()) j["config"][key] = value;
    json in = json::object();
    for (const auto& p : inputs) in[p.string()] = file_digest(p);
    j["inputs"] = std::move(in);
    json out = json::array();
    for (const auto& p : outputs) out.push_back(p.string());
    j["outputs"] = std::move(out);
    write_json_file(outputs.front().string() + ".manifest.json", j);
}

// ---------------------------------------------------------------------------
// Tagged-record JSONL
// ---------------------------------------------------------------------------

json tagged_to_json(const fj::TaggedRecord& tr) {
    json j = fj::record_to_json(tr.record);
    j["cluster"] = tr.tags.cluster_id;
    j["difficulty"] = fj::to_string(tr.tags.difficulty);
    j["winner"] = fj::to_string(tr.tags.winner);
    return j;
}

fj::TagLabels tags_from_json(const json& j) {
    fj::TagLabels tags;
    tags.cluster_id = j.at("cluster").get<int>();
    auto d = fj::difficulty_from_string(j.at("difficulty").get<std::string>());
    auto w = fj::winner_from_string(j.at("winner").get<std::string>());
    if (!d || !w) throw std::runtime_error("bad difficulty/winner tag");
    tags.difficulty = *d;
    tags.winner = *w;
    return tags;
}

// ---------------------------------------------------------------------------
// Subcommand implementations
// ---------------------------------------------------------------------------

int run_tag(const GlobalOptions& g, const std::filesystem::path& input,
            const std::filesystem::path& output, const std::string& sidecar) {
    fj::LoadReport lr;
    auto records = fj::load_records(input, g.record_config(), &lr);
    for (const auto& w : lr.warnings) std::cerr << "tag: skipping " << w << '\n';
    if (records.empty()) throw std::runtime_error("no valid records in " + input.string());

    std::optional<std::vector<std::vector<double>>> side;
    if (!sidecar.empty()) side = fj::load_embedding_sidecar(sidecar, records.size());
    fj::TagOptions opts{g.k, g.embedding_dim, fj::derive_seed(g.seed, fj::fnv1a64("tag"))};
    auto tagged = fj::tag_records(records, g.record_config(), opts, side ? &*side : nullptr);

    std::ofstream out(output);
    if (!out) throw std::runtime_error("cannot write " + output.string());
    for (const auto& tr : tagged) out << tagged_to_json(tr).dump() << '\n';
    out.close();
    std::cerr << "tag: " << tagged.size() << " records tagged, " << lr.skipped << " skipped\n";
    write_manifest("tag", g, {input}, {output},
                   {{"embeddings_sidecar", sidecar.empty() ? json(nullptr) : json(sidecar)}});
    return 0;
}

int run_sample(const GlobalOptions& g, const std::filesystem::path& input,
               const std::filesystem::path& output, const std::string& report_path) {
    auto lines = read_lines(input);
    std::vector<fj::TagLabels> tags;
    tags.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        json j = json::parse(lines[i], nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("cluster"))
            throw std::runtime_error("line " + std::to_string(i + 1) +
                                     " is not a tagged record (run `fairjudge tag` first)");
        tags.push_back(tags_from_json(j));
    }
    fj::SampleReport rep;
    auto selected =
        fj::stratified_sample(tags, g.n, fj::derive_seed(g.seed, fj::fnv1a64("sample")), &rep);

    std::ofstream out(output);
    if (!out) throw std::runtime_error("cannot write " + output.string());
    for (std::size_t idx : selected) out << lines[idx] << '\n';
    out.close();
    std::filesystem::path rp = report_path.empty() ? std::filesystem::path(output.string() + ".report.json")
                                                   : std::filesystem::path(report_path);
    write_json_file(rp, fj::sample_report_to_json(rep));
    std::cerr << "sample: selected " << selected.size() << " of " << lines.size() << " records ("
              << rep.excluded_both_bad << " both_bad excluded)\n";
    write_manifest("sample", g, {input}, {output, rp});
    return 0;
}

// Accepts either EvaluationInstance lines or (tagged) record lines; records
// are lifted to pairwise instances with derived winner golds.
std::vector<fj::EvaluationInstance> load_pairwise_instances(const std::filesystem::path& input,
                                                            const fj::RecordConfig& cfg,
                                                            std::size_t* skipped) {
    std::vector<fj::EvaluationInstance> instances;
    auto lines = read_lines(input);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        json j = json::parse(lines[i]);
        if (j.contains("mode")) {
            fj::EvaluationInstance inst = fj::instance_from_json(j);
            if (inst.mode != fj::Mode::Pairwise) {
                if (skipped) ++*skipped;
                continue;
            }
            instances.push_back(std::move(inst));
            continue;
        }
        std::string reason;
        auto rec = fj::parse_record_line(lines[i], cfg, &reason);
        if (!rec) throw std::runtime_error("line " + std::to_string(i + 1) + ": " + reason);
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "rec-%06zu", i);
        auto pair = fj::make_crossmode_pair(*rec, idbuf, cfg);
        if (!pair) {
            if (skipped) ++*skipped;  // both_bad
            continue;
        }
        instances.push_back(pair->pairwise);
    }
    return instances;
}

int run_make_dpo(const GlobalOptions& g, const std::filesystem::path& input,
                 const std::filesystem::path& output, const std::string& kinds_csv) {
    std::set<fj::Perturbation> kinds;
    std::stringstream ss(kinds_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (fj::trim(item).empty()) continue;
        auto kind = fj::perturbation_from_string(item);
        if (!kind) throw std::runtime_error("unknown perturbation kind: " + item);
        kinds.insert(*kind);
    }
    std::size_t skipped_inputs = 0;
    auto instances = load_pairwise_instances(input, g.record_config(), &skipped_inputs);

    std::ofstream out(output);
    if (!out) throw std::runtime_error("cannot write " + output.string());
    std::size_t pairs = 0, skipped_kinds = 0;
    std::uint64_t seed = fj::derive_seed(g.seed, fj::fnv1a64("make-dpo"));
    for (const auto& inst : instances) {
        fj::MakeDpoResult res = fj::make_dpo_pairs(inst, kinds, seed);
        skipped_kinds += res.skipped.size();
        for (const auto& pair : res.pairs) {
            out << fj::preference_pair_to_json(pair).dump() << '\n';
            ++pairs;
        }
    }
    out.close();
    std::cerr << "make-dpo: " << pairs << " pairs from " << instances.size() << " instances ("
              << skipped_inputs << " inputs skipped, " << skipped_kinds
              << " kind constructions skipped)\n";
    write_manifest("make-dpo", g, {input}, {output}, {{"kinds", kinds_csv}});
    return 0;
}

int run_make_crossmode(const GlobalOptions& g, const std::filesystem::path& input,
                       const std::filesystem::path& output) {
    fj::LoadReport lr;
    auto records = fj::load_records(input, g.record_config(), &lr);
    for (const auto& w : lr.warnings) std::cerr << "make-crossmode: skipping " << w << '\n';
    std::ofstream out(output);
    if (!out) throw std::runtime_error("cannot write " + output.string());
    std::size_t emitted = 0, skipped = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "cm-%06zu", i);
        auto pair = fj::make_crossmode_pair(records[i], idbuf, g.record_config());
        if (!pair) {
            ++skipped;
            continue;
        }
        out << fj::crossmode_pair_to_json(*pair).dump() << '\n';
        ++emitted;
    }
    out.close();
    std::cerr << "make-crossmode: " << emitted << " pairs, " << skipped << " both_bad skipped\n";
    write_manifest("make-crossmode", g, {input}, {output});
    return 0;
}

int run_score_rewards(const GlobalOptions& g, const std::filesystem::path& input,
                      const std::filesystem::path& output) {
    std::ifstream in(input);
    if (!in) throw std::runtime_error("cannot open " + input.string());
    std::ofstream out(output);
    if (!out) throw std::runtime_error("cannot write " + output.string());
    std::size_t scored = fj::score_rewards_jsonl(in, out, g.reward_options());
    out.close();
    std::cerr << "score-rewards: " << scored << " completions scored\n";
    write_manifest("score-rewards", g, {input}, {output});
    return 0;
}

int run_train(const GlobalOptions& g, const TrainOptions& t, const std::filesystem::path& input,
              const std::string& dpo_path, const std::filesystem::path& output,
              const std::string& report_path) {
    fj::LoadReport lr;
    auto records = fj::load_records(input, g.record_config(), &lr);
    if (records.empty()) throw std::runtime_error("no valid records in " + input.string());

    fj::CurriculumDataset data;
    for (std::size_t i = 0; i < records.size(); ++i) {
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "rec-%06zu", i);
        auto pair = fj::make_crossmode_pair(records[i], idbuf, g.record_config());
        if (!pair) continue;  // both_bad
        data.sft.push_back(pair->pairwise);
        data.sft.push_back(pair->pointwise_a);
        data.sft.push_back(pair->pointwise_b);
        for (auto& task : fj::crossmode_to_grpo_tasks(*pair)) data.grpo.push_back(std::move(task));
        data.eval.push_back(std::move(*pair));
    }
    std::vector<std::filesystem::path> inputs{input};
    if (!dpo_path.empty()) {
        for (const auto& line : read_lines(dpo_path))
            data.dpo.push_back(fj::preference_pair_from_json(json::parse(line)));
        inputs.push_back(dpo_path);
    }

    fj::TrainConfig cfg = t.to_config(fj::derive_seed(g.seed, fj::fnv1a64("train")));
    if (data.dpo.empty()) cfg.dpo_epochs = 0;

    fj::TrainReport rep;
    fj::ToyJudgePolicy policy =
        fj::train_curriculum(fj::ToyJudgePolicy(g.record_config().score_range), data, cfg, &rep);
    fj::save_policy(output, policy);

    json report = fj::train_report_to_json(rep);
    report["counts"] = {{"sft_instances", data.sft.size()},
                       {"dpo_pairs", data.dpo.size()},
                       {"grpo_tasks", data.grpo.size()},
                       {"eval_pairs", data.eval.size()}};
    if (!rep.sft_loss.empty() && !rep.dpo_loss.empty() && !rep.grpo_objective.empty())
        report["combined_loss"] = fj::combined_loss(rep.sft_loss.back(), rep.dpo_loss.back(),
                                                    rep.grpo_objective.back(), cfg.weights);
    std::filesystem::path rp = report_path.empty() ? std::filesystem::path(output.string() + ".report.json")
                                                   : std::filesystem::path(report_path);
    write_json_file(rp, report);
    std::cerr << "train: checkpoint written to " << output.string() << '\n';
    write_manifest("train", g, inputs, {output, rp}, {{"train", t.to_json()}});
    return 0;
}

json f1_to_json(const fj::F1Report& f1) {
    json j;
    const char* names[3] = {"A_win", "B_win", "tie"};
    for (int c = 0; c < 3; ++c) {
        j["per_class"][names[c]] = {{"precision", f1.per_class[c].precision},
                                    {"recall", f1.per_class[c].recall},
                                    {"f1", f1.per_class[c].f1}};
    }
    j["macro_precision"] = f1.macro_precision;
    j["macro_recall"] = f1.macro_recall;
    j["macro_f1"] = f1.macro_f1;
    return j;
}

void export_csv(const std::filesystem::path& path, const json& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "metric,value\n";
    std::function<void(const std::string&, const json&)> walk = [&](const std::string& prefix,
                                                                    const json& node) {
        if (node.is_object()) {
            for (auto& [key, value] : node.items())
                walk(prefix.empty() ? key : prefix + "." + key, value);
        } else if (node.is_number()) {
            out << prefix << ',' << node.dump() << '\n';
        }
    };
    walk("", report);
}

int run_eval(const GlobalOptions& g, const std::string& checkpoint,
             const std::filesystem::path& input, const std::filesystem::path& output,
             const std::string& csv_path) {
    json report;
    if (!checkpoint.empty()) {
        // Evaluate a trained policy on cross-mode pairs.
        fj::ToyJudgePolicy policy = fj::load_policy(checkpoint);
        std::vector<fj::CrossModePair> pairs;
        for (const auto& line : read_lines(input))
            pairs.push_back(fj::crossmode_pair_from_json(json::parse(line)));
        if (pairs.empty()) throw std::runtime_error("no cross-mode pairs in " + input.string());
        fj::StageSnapshot snap = fj::evaluate_policy(policy, pairs);
        fj::ConfusionTable table;
        for (const auto& pair : pairs)
            table.add(*pair.pairwise.gold_label(), fj::predict_pairwise(policy, pair.pairwise));
        report["n"] = pairs.size();
        report["agreement"] = snap.agreement;
        report["consistency"] = snap.consistency;
        report["position_flip_rate"] = snap.flip_rate;
        report["f1"] = f1_to_json(fj::macro_f1(table));
    } else {
        // Evaluate prediction/gold lines.
        std::vector<std::optional<fj::JudgmentLabel>> preds, swapped_preds;
        std::vector<fj::JudgmentLabel> golds;
        std::vector<fj::CrossModeItem> items;
        std::vector<std::size_t> len_a, len_b;
        bool have_points = true, have_lengths = true, have_swapped = true;
        fj::ConfusionTable table;
        for (const auto& line : read_lines(input)) {
            json j = json::parse(line);
            auto gold = fj::judgment_label_from_string(j.at("gold").get<std::string>());
            if (!gold) throw std::runtime_error("unknown gold label: " + j.at("gold").dump());
            std::optional<fj::JudgmentLabel> pred;
            if (j.contains("pred") && j.at("pred").is_string())
                pred = fj::judgment_label_from_string(j.at("pred").get<std::string>());
            golds.push_back(*gold);
            preds.push_back(pred);
            table.add(*gold, pred);
            if (j.contains("point_a") && j.at("point_a").is_number_integer() &&
                j.contains("point_b") && j.at("point_b").is_number_integer()) {
                items.push_back({j.at("point_a").get<int>(), j.at("point_b").get<int>(), pred});
            } else {
                have_points = false;
            }
            if (j.contains("length_a") && j.contains("length_b")) {
                len_a.push_back(j.at("length_a").get<std::size_t>());
                len_b.push_back(j.at("length_b").get<std::size_t>());
            } else {
                have_lengths = false;
            }
            if (j.contains("swapped_pred") && j.at("swapped_pred").is_string())
                swapped_preds.push_back(
                    fj::judgment_label_from_string(j.at("swapped_pred").get<std::string>()));
            else
                have_swapped = false;
        }
        if (golds.empty()) throw std::runtime_error("no items in " + input.string());
        report["n"] = golds.size();
        report["agreement"] = fj::agreement(preds, golds);
        report["f1"] = f1_to_json(fj::macro_f1(table));
        report["unparseable"] = table.unparseable;
        if (have_points) report["consistency"] = fj::consistency_score(items);
        if (have_swapped && swapped_preds.size() == preds.size())
            report["position_flip_rate"] = fj::position_flip_rate(preds, swapped_preds);
        if (have_lengths) {
            fj::LengthBias bias = fj::length_preference_rate(preds, len_a, len_b, golds);
            json b;
            b["predicted_longer_rate"] =
                bias.predicted_longer_rate ? json(*bias.predicted_longer_rate) : json(nullptr);
            b["gold_longer_rate"] =
                bias.gold_longer_rate ? json(*bias.gold_longer_rate) : json(nullptr);
            b["predicted_count"] = bias.predicted_count;
            b["gold_count"] = bias.gold_count;
            report["length_bias"] = std::move(b);
        }
    }
    write_json_file(output, report);
    if (!csv_path.empty()) export_csv(csv_path, report);
    std::vector<std::filesystem::path> inputs{input};
    if (!checkpoint.empty()) inputs.push_back(checkpoint);
    std::vector<std::filesystem::path> outputs{output};
    if (!csv_path.empty()) outputs.push_back(csv_path);
    write_manifest("eval", g, inputs, outputs);
    return 0;
}

int run_consistency(const GlobalOptions& g, const std::filesystem::path& input,
                    const std::filesystem::path& output) {
    std::vector<fj::CrossModeItem> items;
    for (const auto& line : read_lines(input)) {
        json j = json::parse(line);
        fj::CrossModeItem item;
        if (j.contains("point_a") && j.at("point_a").is_number_integer())
            item.point_a = j.at("point_a").get<int>();
        if (j.contains("point_b") && j.at("point_b").is_number_integer())
            item.point_b = j.at("point_b").get<int>();
        const char* label_key = j.contains("label") ? "label" : "pred";
        if (j.contains(label_key) && j.at(label_key).is_string())
            item.label = fj::judgment_label_from_string(j.at(label_key).get<std::string>());
        items.push_back(item);
    }
    if (items.empty()) throw std::runtime_error("no items in " + input.string());
    json report;
    report["n"] = items.size();
    report["consistency"] = fj::consistency_score(items);
    write_json_file(output, report);
    write_manifest("consistency", g, {input}, {output});
    return 0;
}

int run_bias(const GlobalOptions& g, const std::filesystem::path& input,
             const std::filesystem::path& output) {
    std::vector<std::optional<fj::JudgmentLabel>> preds, swapped_preds;
    std::vector<fj::JudgmentLabel> golds;
    std::vector<std::size_t> len_a, len_b;
    bool have_lengths = true, have_swapped = true, have_golds = true;
    for (const auto& line : read_lines(input)) {
        json j = json::parse(line);
        std::optional<fj::JudgmentLabel> pred;
        if (j.contains("pred") && j.at("pred").is_string())
            pred = fj::judgment_label_from_string(j.at("pred").get<std::string>());
        preds.push_back(pred);
        if (j.contains("swapped_pred") && j.at("swapped_pred").is_string())
            swapped_preds.push_back(
                fj::judgment_label_from_string(j.at("swapped_pred").get<std::string>()));
        else
            have_swapped = false;
        if (j.contains("length_a") && j.contains("length_b")) {
            len_a.push_back(j.at("length_a").get<std::size_t>());
            len_b.push_back(j.at("length_b").get<std::size_t>());
        } else {
            have_lengths = false;
        }
        if (j.contains("gold") && j.at("gold").is_string()) {
            auto gold = fj::judgment_label_from_string(j.at("gold").get<std::string>());
            if (gold) golds.push_back(*gold);
            else have_golds = false;
        } else {
            have_golds = false;
        }
    }
    if (preds.empty()) throw std::runtime_error("no items in " + input.string());
    json report;
    report["n"] = preds.size();
    if (have_swapped && swapped_preds.size() == preds.size())
        report["position_flip_rate"] = fj::position_flip_rate(preds, swapped_preds);
    if (have_lengths) {
        fj::LengthBias bias = fj::length_preference_rate(
            preds, len_a, len_b,
            have_golds ? std::span<const fj::JudgmentLabel>(golds)
                       : std::span<const fj::JudgmentLabel>());
        report["length_bias"] = {
            {"predicted_longer_rate",
             bias.predicted_longer_rate ? json(*bias.predicted_longer_rate) : json(nullptr)},
            {"gold_longer_rate",
             bias.gold_longer_rate ? json(*bias.gold_longer_rate) : json(nullptr)},
            {"predicted_count", bias.predicted_count},
            {"gold_count", bias.gold_count}};
    }
    write_json_file(output, report);
    write_manifest("bias", g, {input}, {output});
    return 0;
}

int run_losscheck(const GlobalOptions& g, int trials, double step, double tol) {
    fj::Rng rng(fj::derive_seed(g.seed, fj::fnv1a64("losscheck")));
    fj::ScoreRange range{g.score_range.at(0), g.score_range.at(1)};
    auto random_policy = [&](int ctx) {
        fj::ToyJudgePolicy p(range);
        auto& row = p.row(ctx);
        for (double& v : row) v = rng.next_double() * 2.0 - 1.0;
        return p;
    };

    struct Row {
        const char* name;
        double max_err = 0.0;
        bool pass = true;
    };
    std::vector<Row> rows = {{"sft"}, {"dpo"}, {"grpo"}};
    for (int t = 0; t < trials; ++t) {
        int ctx = static_cast<int>(rng.next_below(1024));
        fj::ToyJudgePolicy pol = random_policy(ctx);
        int arity = pol.arity(ctx);

        auto rep = fj::grad_check_sft(pol, ctx, rng.next_int(0, arity - 1), step, tol);
        rows[0].max_err = std::max(rows[0].max_err, rep.max_rel_error);
        rows[0].pass = rows[0].pass && rep.pass;

        fj::ToyJudgePolicy ref = random_policy(ctx);
        int y_pos = rng.next_int(0, arity - 1);
        int y_neg = rng.next_int(0, arity - 1);
        rep = fj::grad_check_dpo(pol, ref, ctx, y_pos, y_neg, 0.1 + rng.next_double(), step, tol);
        rows[1].max_err = std::max(rows[1].max_err, rep.max_rel_error);
        rows[1].pass = rows[1].pass && rep.pass;

        int m = rng.next_int(2, 8);
        std::vector<int> outputs;
        std::vector<double> rewards;
        for (int j = 0; j < m; ++j) {
            outputs.push_back(rng.next_int(0, arity - 1));
            rewards.push_back(rng.next_double() * 2.0);
        }
        rep = fj::grad_check_grpo(pol, ref, ctx, outputs, rewards, 0.2, 0.01, step, tol);
        rows[2].max_err = std::max(rows[2].max_err, rep.max_rel_error);
        rows[2].pass = rows[2].pass && rep.pass;
    }

    bool all_pass = true;
    std::printf("%-6s %12s %12s  %s\n", "loss", "max_rel_err", "tolerance", "status");
    for (const Row& row : rows) {
        std::printf("%-6s %12.3e %12.3e  %s\n", row.name, row.max_err, tol,
                    row.pass ? "PASS" : "FAIL");
        all_pass = all_pass && row.pass;
    }
    return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fairjudge: judging-data construction, consistency rewards, "
                 "toy curriculum training, and evaluation metrics"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags are accepted after the subcommand too

    GlobalOptions g;
    TrainOptions t;

    // The config file supplies defaults; explicit flags win.
    std::string config_path;
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--config") config_path = argv[i + 1];
    if (!config_path.empty()) {
        try {
            apply_config_file(config_path, g, t);
        } catch (const std::exception& e) {
            std::cerr << "fairjudge: config error: " << e.what() << '\n';
            return 3;
        }
    }

    app.add_option("--config", config_path, "JSON config file with option defaults");
    bool seed_flag = false;
    auto* seed_opt = app.add_option("--seed", g.seed, "global seed for all stochastic operations");
    app.add_option("--score-range", g.score_range, "score range lo hi")->expected(2);
    app.add_option("--both-bad-threshold", g.both_bad_threshold,
                   "both scores <= threshold marks a record both_bad");
    app.add_option("--mode", g.parse_mode, "completion parse mode")
        ->check(CLI::IsMember({"full", "fast"}));
    app.add_flag("--strict-parse,!--lenient-parse", g.strict_parse,
                 "canonical decision tokens only (default strict)");

    std::string input, output, sidecar, kinds = "order_swap,length_pad,format_change";
    std::string report_path, checkpoint, csv_path, dpo_path;

    auto add_io = [&](CLI::App* cmd, bool need_output = true) {
        cmd->add_option("--input", input, "input JSONL file")->required();
        if (need_output) cmd->add_option("--output", output, "output file")->required();
    };

    auto* tag = app.add_subcommand("tag", "embed, cluster, and tag records");
    add_io(tag);
    tag->add_option("--k", g.k, "number of domain clusters");
    tag->add_option("--dim", g.embedding_dim, "embedding dimension");
    tag->add_option("--embeddings", sidecar, "sidecar JSONL of precomputed embeddings");

    auto* sample = app.add_subcommand("sample", "stratified sampling over tagged records");
    add_io(sample);
    sample->add_option("--n", g.n, "target sample size");
    sample->add_option("--report", report_path, "stratum report path");

    auto* make_dpo = app.add_subcommand("make-dpo", "build debiasing preference pairs");
    add_io(make_dpo);
    make_dpo->add_option("--kinds", kinds, "comma-separated perturbation kinds");

    auto* make_crossmode =
        app.add_subcommand("make-crossmode", "build pointwise/pairwise cross-mode pairs");
    add_io(make_crossmode);

    auto* score = app.add_subcommand("score-rewards", "batch consistency-reward scoring");
    add_io(score);

    auto* train = app.add_subcommand("train", "run the SFT->DPO->GRPO curriculum");
    add_io(train);
    train->add_option("--dpo", dpo_path, "preference pairs JSONL for the DPO stage");
    train->add_option("--report", report_path, "training report path");
    train->add_option("--sft-epochs", t.sft_epochs, "SFT epochs");
    train->add_option("--dpo-epochs", t.dpo_epochs, "DPO epochs");
    train->add_option("--grpo-epochs", t.grpo_epochs, "GRPO epochs");
    train->add_option("--lr", t.learning_rate, "learning rate");
    train->add_option("--group-size", t.group_size, "GRPO group size M");
    train->add_option("--beta", t.beta, "DPO temperature");
    train->add_option("--epsilon", t.epsilon, "GRPO clip range");
    train->add_option("--lambda-kl", t.lambda_kl, "GRPO KL penalty weight");
    train->add_option("--lambda-dpo", t.lambda_dpo, "curriculum weight for DPO");
    train->add_option("--lambda-grpo", t.lambda_grpo, "curriculum weight for GRPO");
    train->add_option("--ref-refresh", t.ref_refresh, "reference policy refresh")
        ->check(CLI::IsMember({"per-stage", "never"}));

    auto* eval = app.add_subcommand("eval", "metrics over predictions or a checkpoint");
    add_io(eval);
    eval->add_option("--checkpoint", checkpoint, "policy checkpoint to evaluate");
    eval->add_option("--csv", csv_path, "also export flat CSV");

    auto* consistency = app.add_subcommand("consistency", "pointwise-pairwise consistency score");
    add_io(consistency);

    auto* bias = app.add_subcommand("bias", "non-semantic bias audit");
    add_io(bias);

    auto* losscheck = app.add_subcommand("losscheck", "finite-difference gradient check suite");
    int trials = 100;
    double step = 1e-5, tol = 1e-4;
    losscheck->add_option("--trials", trials, "random instances per loss");
    losscheck->add_option("--step", step, "finite-difference step");
    losscheck->add_option("--tol", tol, "max relative error tolerance");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    seed_flag = seed_opt->count() > 0;
    if (seed_flag) g.seed_given = true;
    if (!g.seed_given) {
        g.seed = std::random_device{}();
        std::cerr << "fairjudge: no --seed given, using " << g.seed << '\n';
    }

    try {
        if (tag->parsed()) return run_tag(g, input, output, sidecar);
        if (sample->parsed()) return run_sample(g, input, output, report_path);
        if (make_dpo->parsed()) return run_make_dpo(g, input, output, kinds);
        if (make_crossmode->parsed()) return run_make_crossmode(g, input, output);
        if (score->parsed()) return run_score_rewards(g, input, output);
        if (train->parsed()) return run_train(g, t, input, dpo_path, output, report_path);
        if (eval->parsed()) return run_eval(g, checkpoint, input, output, csv_path);
        if (consistency->parsed()) return run_consistency(g, input, output);
        if (bias->parsed()) return run_bias(g, input, output);
        if (losscheck->parsed()) return run_losscheck(g, trials, step, tol);
    } catch (const std::logic_error& e) {
        std::cerr << "fairjudge: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "fairjudge: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
