#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "pathforge/dataset.hpp"
#include "pathforge/error.hpp"
#include "pathforge/fixture_tree.hpp"
#include "pathforge/grpo.hpp"
#include "pathforge/metrics.hpp"
#include "pathforge/svg.hpp"
#include "pathforge/taxonomy.hpp"
#include "pathforge/toy_lab.hpp"

namespace pathforge::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitIo = 2;

using nlohmann::json;

namespace detail {

struct Console {
    std::ostream& out;
    std::ostream& err;
    bool color = false;

    void error(const std::string& msg) const {
        err << (color ? "\033[31merror:\033[0m " : "error: ") << msg << '\n';
    }
    void warn(const std::string& msg) const {
        err << (color ? "\033[33mwarning:\033[0m " : "warning: ") << msg << '\n';
    }
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + p.string() + "'");
    out << content;
    if (!out) throw Error(ErrorCode::Io, "write to '" + p.string() + "' failed");
}

inline std::filesystem::path prepare_out(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create output directory '" + dir + "': " + ec.message());
    return dir;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

// Subcommand parameters live in a JSON object: defaults, overlaid by a
// replayed snapshot, overlaid by flags given on the command line.
struct Binding {
    CLI::Option* option;
    std::function<void(json&)> store;
};

template <typename T>
void bind_option(CLI::App* app, std::vector<Binding>& bindings, const std::string& flag, const std::string& key,
          const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(flag, *value, help);
    bindings.push_back({opt, [value, key](json& j) { j[key] = *value; }});
}

inline void bind_flag(CLI::App* app, std::vector<Binding>& bindings, const std::string& flag, const std::string& key,
                      const std::string& help) {
    auto value = std::make_shared<bool>(false);
    CLI::Option* opt = app->add_flag(flag, *value, help);
    bindings.push_back({opt, [value, key](json& j) { j[key] = *value; }});
}

inline json forge_defaults() {
    return {{"tree", ""}, {"manifest", ""}, {"alpha", 2.0}, {"paths", 50}, {"flag_scope", "per_path"}};
}

inline json transform_defaults() { return {{"op", ""}, {"input", ""}, {"mode", "permutation"}}; }

inline json scenario_defaults() {
    json j = lab::lab_config_to_json(lab::LabConfig{});
    j.erase("seed");
    j["scenario"] = "";
    j["tree"] = "";
    j["svg"] = false;
    return j;
}

inline json eval_defaults() { return {{"scores", ""}, {"threshold", nullptr}}; }

inline FlagScope parse_flag_scope(const std::string& s) {
    if (s == "per_path") return FlagScope::PerPath;
    if (s == "global_literal") return FlagScope::GlobalLiteral;
    throw Error(ErrorCode::InvalidArgument, "unknown flag scope '" + s + "' (valid: per_path, global_literal)");
}

inline ReasoningTree load_tree_file(const std::string& path) {
    if (path.empty()) return load_tree(kFasTreeJson);
    return load_tree(read_file(path));
}

// -- tree-validate ----------------------------------------------------------

inline int tree_validate(const std::string& path, const Console& io) {
    const auto text = read_file(path);
    const auto tree = load_tree(text);
    std::size_t leaves = 0;
    for (std::size_t i = 0; i < tree.size(); ++i) leaves += tree.is_leaf(i) ? 1 : 0;
    io.out << "ok: " << tree.size() << " nodes, " << leaves << " leaves, depth " << max_depth(tree) << '\n';
    return kExitOk;
}

// -- forge ----------------------------------------------------------------

inline int forge_cmd(const json& p, std::uint64_t seed, unsigned jobs, const std::string& out_dir, const Console& io) {
    if (p.at("manifest").get<std::string>().empty()) throw Error(ErrorCode::InvalidArgument, "forge needs --manifest");
    const auto tree = load_tree_file(p.at("tree").get<std::string>());
    std::istringstream manifest_text(read_file(p.at("manifest").get<std::string>()));
    const auto manifest = read_manifest(manifest_text);
    const SamplerConfig config{p.at("alpha").get<double>(), p.at("paths").get<std::size_t>(), seed,
                               parse_flag_scope(p.at("flag_scope").get<std::string>())};
    auto result = forge(manifest.samples, tree, config, jobs);
    for (const auto& e : manifest.errors) result.report.errors.push_back(e);
    std::sort(result.report.errors.begin(), result.report.errors.end(),
              [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; });

    const auto dir = prepare_out(out_dir);
    std::ostringstream lines;
    write_jsonl(lines, result.records);
    write_file(dir / "dataset.jsonl", lines.str());
    write_file(dir / "report.json", dump(report_to_json(result.report)));

    io.out << "forged " << result.records.size() << " records from " << manifest.samples.size() << " samples ("
           << result.report.shortfalls.size() << " shortfalls, " << result.report.errors.size() << " errors)\n";
    for (const auto& e : result.report.errors) io.warn(e.sample_id + ": " + e.message);
    const std::size_t rows = manifest.samples.size() + manifest.errors.size();
    const bool total_failure = rows > 0 && result.report.errors.size() == rows;
    if (total_failure) io.error("no sample could be forged");
    return total_failure ? kExitDomain : kExitOk;
}

// -- transform ------------------------------------------------------------

inline int transform_cmd(const json& p, std::uint64_t seed, const std::string& out_dir, const Console& io) {
    const auto op = p.at("op").get<std::string>();
    if (op != "shuffle-answers" && op != "shuffle-paths")
        throw Error(ErrorCode::InvalidArgument, "unknown transform '" + op + "' (valid: shuffle-answers, shuffle-paths)");
    std::istringstream in(read_file(p.at("input").get<std::string>()));
    auto records = read_jsonl(in);
    if (op == "shuffle-answers")
        records = shuffle_answers(std::move(records), seed, parse_shuffle_mode(p.at("mode").get<std::string>()));
    else
        records = shuffle_paths(std::move(records), seed);
    const auto dir = prepare_out(out_dir);
    std::ostringstream lines;
    write_jsonl(lines, records);
    write_file(dir / "dataset.jsonl", lines.str());
    io.out << op << ": " << records.size() << " records\n";
    return kExitOk;
}

// -- run-scenario ---------------------------------------------------------

inline std::string curves_csv(const lab::ExperimentReport& r) {
    std::string s = "step,mean_reward,objective,cumulative_effective,cumulative_ineffective\n";
    for (std::size_t i = 0; i < r.steps.size(); ++i) {
        s += std::to_string(r.steps[i].step) + ',' + grpo::format_real(r.steps[i].mean_reward) + ',' +
             grpo::format_real(r.steps[i].objective) + ',' + std::to_string(r.ledger[i].effective) + ',' +
             std::to_string(r.ledger[i].ineffective) + '\n';
    }
    return s;
}

inline std::string scores_csv(const lab::ExperimentReport& r, const std::vector<lab::SyntheticSample>& samples) {
    std::string s = "sample_id,score,is_live,domain_tag\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        s += samples[i].sample_id + ',' + grpo::format_real(r.shifted.scores[i]) + ',' +
             (r.shifted.is_live[i] ? "1" : "0") + ',' + samples[i].domain_tag + '\n';
    }
    return s;
}

inline int scenario_cmd(const json& p, std::uint64_t seed, const std::string& out_dir, const Console& io) {
    const auto name = p.at("scenario").get<std::string>();
    const auto tree = load_tree_file(p.at("tree").get<std::string>());
    json cfg_json = p;
    cfg_json["seed"] = seed;
    const auto config = lab::lab_config_from_json(cfg_json);
    const auto report = lab::run_scenario(name, config, tree);

    const auto dir = prepare_out(out_dir);
    std::ostringstream steps;
    grpo::write_step_csv_header(steps);
    for (const auto& s : report.steps) grpo::write_step_csv(steps, s);
    write_file(dir / "steps.csv", steps.str());
    write_file(dir / "curves.csv", curves_csv(report));
    write_file(dir / "scores.csv", scores_csv(report, lab::make_lab_data(config).shifted_eval));
    write_file(dir / "summary.json", dump(lab::report_summary_json(report)));

    if (p.at("svg").get<bool>()) {
        svg::Series eff{"effective", {}, {}}, ineff{"ineffective", {}, {}}, reward{"mean reward", {}, {}};
        for (std::size_t i = 0; i < report.steps.size(); ++i) {
            const double x = static_cast<double>(report.steps[i].step);
            eff.x.push_back(x);
            eff.y.push_back(static_cast<double>(report.ledger[i].effective));
            ineff.x.push_back(x);
            ineff.y.push_back(static_cast<double>(report.ledger[i].ineffective));
            reward.x.push_back(x);
            reward.y.push_back(report.steps[i].mean_reward);
        }
        write_file(dir / "ledger.svg", svg::line_chart(name + ": rollout groups", "step", "cumulative groups", {eff, ineff}));
        write_file(dir / "reward.svg", svg::line_chart(name + ": reward", "step", "mean reward", {reward}));
    }

    auto fmt = [](const std::optional<double>& v) { return v ? grpo::format_real(*v) : std::string("undefined"); };
    io.out << name << " seed " << seed << ": accuracy " << grpo::format_real(report.accuracy) << ", auc " << fmt(report.auc)
           << ", hter " << fmt(report.hter) << ", perplexity " << fmt(report.perplexity) << ", ineffective groups "
           << report.final_ineffective << "/" << report.final_effective + report.final_ineffective << '\n';
    return kExitOk;
}

// -- eval -----------------------------------------------------------------

struct ScoreRow {
    std::string sample_id;
    double score = 0.0;
    bool is_live = false;
    std::string domain_tag;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cell);
            cell.clear();
        } else if (c != '\r') {
            cell += c;
        }
    }
    cells.push_back(cell);
    return cells;
}

/// Reads sample_id, score, is_live, domain_tag (header required, column
/// order free).
inline std::vector<ScoreRow> parse_scores(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::map<std::string, std::size_t> col;
    std::vector<ScoreRow> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = split_csv_line(line);
        if (col.empty()) {
            for (std::size_t i = 0; i < cells.size(); ++i) col[cells[i]] = i;
            for (const char* need : {"sample_id", "score", "is_live", "domain_tag"}) {
                if (!col.contains(need))
                    throw Error(ErrorCode::InvalidRecord, std::string("score file header lacks column '") + need + "'");
            }
            continue;
        }
        auto at = [&](const char* name) -> const std::string& {
            const std::size_t i = col.at(name);
            if (i >= cells.size())
                throw Error(ErrorCode::InvalidRecord, "line " + std::to_string(line_no) + ": missing " + name);
            return cells[i];
        };
        ScoreRow r;
        r.sample_id = at("sample_id");
        r.domain_tag = at("domain_tag");
        const auto& s = at("score");
        char* end = nullptr;
        r.score = std::strtod(s.c_str(), &end);
        if (s.empty() || end != s.c_str() + s.size())
            throw Error(ErrorCode::InvalidRecord, "line " + std::to_string(line_no) + ": bad score '" + s + "'");
        const auto& live = at("is_live");
        if (live == "1" || live == "true") {
            r.is_live = true;
        } else if (live != "0" && live != "false") {
            throw Error(ErrorCode::InvalidRecord, "line " + std::to_string(line_no) + ": bad is_live '" + live + "'");
        }
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw Error(ErrorCode::InvalidRecord, "score file has no rows");
    return rows;
}

/// {auc, eer, eer_threshold, threshold, hter, accuracy} for one set; threshold
/// metrics are null with a reason when the set holds a single class.
inline json metrics_json(const metrics::ScoredSet& set, const std::optional<double>& threshold) {
    std::size_t live = 0;
    for (const auto& e : set) live += e.is_live ? 1 : 0;
    json j{{"n", set.size()}, {"n_live", live}, {"n_spoof", set.size() - live}};
    try {
        const auto e = metrics::eer_threshold(set);
        const double t = threshold.value_or(e.threshold);
        j["auc"] = metrics::auc(set);
        j["eer"] = e.eer;
        j["eer_threshold"] = std::isfinite(e.threshold) ? json(e.threshold) : json(e.threshold > 0 ? "inf" : "-inf");
        j["threshold"] = std::isfinite(t) ? json(t) : json(t > 0 ? "inf" : "-inf");
        j["hter"] = metrics::hter(set, t);
        j["accuracy"] = metrics::accuracy(set, t);
    } catch (const Error& err) {
        if (err.code() != ErrorCode::UndefinedMetric) throw;
        for (const char* k : {"auc", "eer", "eer_threshold", "threshold", "hter", "accuracy"}) j[k] = nullptr;
        j["undefined"] = err.what();
    }
    return j;
}

inline int eval_cmd(const json& p, const std::string& out_dir, const Console& io) {
    const auto rows = parse_scores(read_file(p.at("scores").get<std::string>()));
    std::optional<double> threshold;
    if (!p.at("threshold").is_null()) threshold = p.at("threshold").get<double>();

    std::map<std::string, metrics::ScoredSet> by_domain;
    metrics::ScoredSet all;
    for (const auto& r : rows) {
        by_domain[r.domain_tag].push_back({r.score, r.is_live});
        all.push_back({r.score, r.is_live});
    }
    json domains = json::object();
    for (const auto& [tag, set] : by_domain) domains[tag] = metrics_json(set, threshold);
    const json result{{"domains", domains},
                      {"overall", metrics_json(all, threshold)},
                      {"threshold_protocol", threshold ? "fixed" : "eer-of-set"},
                      {"accept_rule", "score >= threshold"}};
    const auto dir = prepare_out(out_dir);
    write_file(dir / "metrics.json", dump(result));

    auto cell = [](const json& v) { return v.is_number() ? grpo::format_real(v.get<double>()) : std::string("undefined"); };
    auto print = [&](const std::string& name, const json& m) {
        io.out << name << "  auc " << cell(m["auc"]) << "  eer " << cell(m["eer"]) << "  hter " << cell(m["hter"])
               << "  accuracy " << cell(m["accuracy"]) << '\n';
    };
    for (const auto& [tag, m] : domains.items()) print(tag, m);
    print("overall", result["overall"]);
    return kExitOk;
}

} // namespace detail

/**
 * Entry point of the `pathforge` binary. Subcommands write their outputs
 * and a config.json snapshot into --out; `--config <snapshot>` replays a
 * snapshot, with flags given on the command line taking precedence.
 */
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    const bool color = std::getenv("PATHFORGE_NO_COLOR") == nullptr && ::isatty(2) != 0;
    const detail::Console io{out, err, color};

    CLI::App app{"Reasoning-path dataset forge and GRPO toy lab"};
    app.name("pathforge");
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    std::string out_dir = "out";
    std::string config_path;
    auto* seed_opt = app.add_option("--seed", seed, "Seed for every random choice")->capture_default_str();
    auto* jobs_opt = app.add_option("--jobs", jobs, "Worker threads (outputs do not depend on it)")->capture_default_str();
    app.add_option("--out", out_dir, "Output directory")->capture_default_str();
    app.add_option("--config", config_path, "Replay a config.json snapshot");
    app.require_subcommand(0, 1);
    app.fallthrough();

    std::map<std::string, std::vector<detail::Binding>> bindings;
    using detail::bind_option;
    using detail::bind_flag;

    auto* validate = app.add_subcommand("tree-validate", "Check a reasoning tree file");
    std::string validate_path;
    validate->add_option("tree", validate_path, "Tree JSON")->required();

    auto* forge_app = app.add_subcommand("forge", "Sample reasoning paths and write a training dataset");
    auto& fb = bindings["forge"];
    bind_option<std::string>(forge_app, fb, "--tree", "tree", "Tree JSON (default: bundled fixture)");
    bind_option<std::string>(forge_app, fb, "--manifest", "manifest", "Sample manifest (JSON Lines)");
    bind_option<double>(forge_app, fb, "--alpha", "alpha", "Path length factor, L_max = floor(alpha (D - 1))");
    bind_option<std::size_t>(forge_app, fb, "--paths,-N", "paths", "Paths per sample");
    bind_option<std::string>(forge_app, fb, "--flag-scope", "flag_scope", "per_path | global_literal");

    auto* transform_app = app.add_subcommand("transform", "Shuffle answers or paths across records");
    auto& tb = bindings["transform"];
    bind_option<std::string>(transform_app, tb, "op", "op", "shuffle-answers | shuffle-paths");
    bind_option<std::string>(transform_app, tb, "--input", "input", "Dataset (JSON Lines)");
    bind_option<std::string>(transform_app, tb, "--mode", "mode", "permutation | derangement (shuffle-answers)");

    auto* scenario_app = app.add_subcommand("run-scenario", "Run a toy-lab training scenario");
    auto& sb = bindings["run-scenario"];
    bind_option<std::string>(scenario_app, sb, "scenario", "scenario", "Scenario name");
    bind_option<std::string>(scenario_app, sb, "--tree", "tree", "Tree JSON (default: bundled fixture)");
    bind_option<double>(scenario_app, sb, "--alpha", "alpha", "Path length factor");
    bind_option<std::size_t>(scenario_app, sb, "--paths,-N", "paths", "Paths per annotated sample");
    bind_option<std::string>(scenario_app, sb, "--flag-scope", "flag_scope", "per_path | global_literal");
    bind_option<std::string>(scenario_app, sb, "--shuffle-mode", "shuffle_mode", "permutation | derangement");
    bind_flag(scenario_app, sb, "--reshuffle-each-epoch", "sft_reshuffle_each_epoch", "Reshuffle answers every SFT epoch");
    bind_option<std::size_t>(scenario_app, sb, "--sft-epochs", "sft_epochs", "SFT passes");
    bind_option<double>(scenario_app, sb, "--sft-lr", "sft_lr", "SFT step size");
    bind_option<std::size_t>(scenario_app, sb, "--group-size,-G", "group_size", "Responses per prompt");
    bind_option<double>(scenario_app, sb, "--clip-eps", "clip_eps", "Ratio clip range");
    bind_option<double>(scenario_app, sb, "--lr", "rl_lr", "RL step size");
    bind_option<std::size_t>(scenario_app, sb, "--steps", "rl_steps", "RL steps");
    bind_option<std::size_t>(scenario_app, sb, "--batch", "rl_batch", "Prompts per RL step");
    bind_option<double>(scenario_app, sb, "--temperature", "temperature", "Sampling temperature");
    bind_option<std::size_t>(scenario_app, sb, "--annotated", "annotated_samples", "Annotated (SFT) samples");
    bind_option<std::size_t>(scenario_app, sb, "--rl-samples", "rl_samples", "RL prompt pool");
    bind_option<std::size_t>(scenario_app, sb, "--eval-samples", "eval_samples", "Evaluation samples per domain");
    bind_flag(scenario_app, sb, "--svg", "svg", "Also write SVG charts of the curves");

    auto* eval_app = app.add_subcommand("eval", "AUC / EER / HTER / accuracy per domain");
    auto& eb = bindings["eval"];
    bind_option<std::string>(eval_app, eb, "scores", "scores", "Score CSV: sample_id,score,is_live,domain_tag");
    bind_option<double>(eval_app, eb, "--threshold", "threshold", "Fixed threshold instead of the EER point");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitDomain;
    }

    try {
        std::string command = app.get_subcommands().empty() ? "" : app.get_subcommands().front()->get_name();
        json snapshot;
        if (!config_path.empty()) {
            try {
                snapshot = json::parse(detail::read_file(config_path));
            } catch (const json::parse_error& e) {
                throw Error(ErrorCode::InvalidArgument, "config '" + config_path + "' is not JSON: " + e.what());
            }
            const auto snap_cmd = snapshot.value("command", std::string());
            if (command.empty()) command = snap_cmd;
            if (command != snap_cmd)
                throw Error(ErrorCode::InvalidArgument, "config is for '" + snap_cmd + "', not '" + command + "'");
            if (seed_opt->count() == 0 && snapshot.contains("seed")) seed = snapshot["seed"].get<std::uint64_t>();
            if (jobs_opt->count() == 0 && snapshot.contains("jobs")) jobs = snapshot["jobs"].get<unsigned>();
        }
        if (command.empty()) {
            err << app.help();
            return kExitDomain;
        }
        if (command == "tree-validate") return detail::tree_validate(validate_path, io);

        json params = command == "forge"       ? detail::forge_defaults()
                      : command == "transform" ? detail::transform_defaults()
                      : command == "eval"      ? detail::eval_defaults()
                                               : detail::scenario_defaults();
        if (snapshot.contains("params")) {
            for (const auto& [k, v] : snapshot["params"].items()) {
                if (!params.contains(k)) throw Error(ErrorCode::InvalidArgument, "config has unknown key '" + k + "'");
                params[k] = v;
            }
        }
        for (const auto& b : bindings[command]) {
            if (b.option->count() > 0) b.store(params);
        }
        if (command == "run-scenario" && !lab::is_scenario(params["scenario"].get<std::string>())) {
            std::string names;
            for (auto n : lab::kScenarios) names += (names.empty() ? "" : ", ") + std::string(n);
            throw Error(ErrorCode::UnknownScenario,
                        "unknown scenario '" + params["scenario"].get<std::string>() + "' (valid: " + names + ")");
        }

        const json snap{{"command", command}, {"seed", seed}, {"jobs", jobs}, {"params", params}};
        int code = kExitOk;
        if (command == "forge") code = detail::forge_cmd(params, seed, jobs, out_dir, io);
        else if (command == "transform") code = detail::transform_cmd(params, seed, out_dir, io);
        else if (command == "run-scenario") code = detail::scenario_cmd(params, seed, out_dir, io);
        else code = detail::eval_cmd(params, out_dir, io);
        detail::write_file(detail::prepare_out(out_dir) / "config.json", detail::dump(snap));
        return code;
    } catch (const Error& e) {
        io.error(e.what());
        return e.code() == ErrorCode::Io ? kExitIo : kExitDomain;
    } catch (const json::exception& e) {
        io.error(std::string("bad parameter: ") + e.what());
        return kExitDomain;
    }
}

} // namespace pathforge::cli
