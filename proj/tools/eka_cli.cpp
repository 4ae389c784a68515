#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "eka/common.hpp"
#include "eka/corpus.hpp"
#include "eka/eval_report.hpp"
#include "eka/info_theory.hpp"
#include "eka/llm_backend.hpp"
#include "eka/retrieval.hpp"
#include "eka/rollout.hpp"

namespace fs = std::filesystem;

namespace {

std::string fmt(double value) {
    char buffer[40];
    std::snprintf(buffer, sizeof(buffer), "%.12g", value);
    return buffer;
}

std::string fmt_signed(double value) {
    if (std::fabs(value) < 5e-13) value = 0.0;  // keep rounding noise out of delta rows
    char buffer[40];
    std::snprintf(buffer, sizeof(buffer), "%+.4f", value);
    return buffer;
}

std::string join_doubles(const std::vector<double>& values) {
    std::string out = "[";
    for (size_t i = 0; i < values.size(); ++i) {
        if (i > 0) out += ", ";
        out += fmt(values[i]);
    }
    return out + "]";
}

struct IndexArgs {
    std::string corpus;
    std::string out;
    int chunk_size = 128;
    int chunk_overlap = 32;
    eka::RetrieverConfig retriever;
    std::string retriever_backend = "lexical";
    bool force = false;
};

struct RunArgs {
    std::string index;
    std::string eka = "on";
    bool strict = false;
    std::string backend = "scripted-mock";
    std::string script;
    std::string endpoint;
    std::string model;
    std::string api_key_env = "EKA_API_KEY";
    int max_turns = 8;
    int max_tokens_per_segment = 1024;
    int total_token_budget = 4096;
    double temperature = 0.0;
    int top_logprobs = 5;
    uint64_t seed = 0;
    int k = 5;
    int early_k = 0;  // 0 = use k
    std::string reward = "em";

    // run only
    std::string question;
    std::string dump_trajectory;

    // eval only
    std::string dataset;
    std::string scripts_dir;
    int group_size = 1;
    std::string report;
    std::string entropy_csv_path;
};

void add_rollout_options(CLI::App* cmd, RunArgs& args) {
    cmd->add_option("--index", args.index, "index file built by the index command")->required();
    cmd->add_option("--eka", args.eka, "inject pre-rollout knowledge: on|off")
        ->check(CLI::IsMember({"on", "off"}));
    cmd->add_flag("--strict", args.strict, "reject non-JSON query payloads with feedback");
    cmd->add_option("--backend", args.backend, "scripted-mock | policy-sim | http-endpoint");
    cmd->add_option("--script", args.script, "mock turn script / policy spec file");
    cmd->add_option("--endpoint", args.endpoint, "chat-completions endpoint URL");
    cmd->add_option("--model", args.model, "model name for the endpoint");
    cmd->add_option("--api-key-env", args.api_key_env, "env var holding the API key");
    cmd->add_option("--max-turns", args.max_turns, "loop budget B");
    cmd->add_option("--max-tokens-per-segment", args.max_tokens_per_segment,
                    "generation cap per turn");
    cmd->add_option("--total-token-budget", args.total_token_budget,
                    "generation cap per rollout");
    cmd->add_option("--temperature", args.temperature, "sampling temperature");
    cmd->add_option("--top-logprobs", args.top_logprobs, "alternatives recorded per token");
    cmd->add_option("--seed", args.seed, "base seed for engine-level randomness");
    cmd->add_option("--k", args.k, "passages per in-loop retrieval");
    cmd->add_option("--early-k", args.early_k, "passages for the pre-rollout retrieval (0 = --k)");
    cmd->add_option("--reward", args.reward, "reward metric: em|f1")
        ->check(CLI::IsMember({"em", "f1"}));
}

eka::RolloutConfig rollout_config(const RunArgs& args) {
    eka::RolloutConfig config;
    config.max_turns = args.max_turns;
    config.eka_enabled = args.eka == "on";
    config.strict_query_format = args.strict;
    config.reward_kind = eka::reward_kind_from_name(args.reward);
    config.prompt_template =
        config.eka_enabled ? eka::PromptTemplate::Eka : eka::PromptTemplate::Baseline;
    config.retriever.k = args.k;
    if (args.early_k > 0) config.retriever.early_k = args.early_k;
    config.backend.kind = eka::backend_kind_from_name(args.backend);
    config.backend.endpoint = args.endpoint;
    config.backend.model = args.model;
    config.backend.api_key_env = args.api_key_env;
    config.backend.script = args.script;
    config.backend.seed = args.seed;
    config.max_tokens_per_segment = args.max_tokens_per_segment;
    config.total_token_budget = args.total_token_budget;
    config.temperature = args.temperature;
    config.top_logprobs = args.top_logprobs;
    config.seed = args.seed;
    return config;
}

// Per-question (and per-slot) script convention inside --scripts-dir:
// q<N>_s<S>.<ext> when present, else q<N>.<ext>; N and S are 1-based.
std::string question_script(const std::string& dir, size_t question_no, int slot,
                            const std::string& extension) {
    if (slot > 0) {
        const fs::path per_slot = fs::path(dir) / ("q" + std::to_string(question_no) + "_s" +
                                                   std::to_string(slot) + extension);
        if (fs::exists(per_slot)) return per_slot.string();
    }
    const fs::path shared = fs::path(dir) / ("q" + std::to_string(question_no) + extension);
    if (!fs::exists(shared)) {
        throw eka::UserError("no script for question " + std::to_string(question_no) + " in " +
                             dir);
    }
    return shared.string();
}

std::shared_ptr<eka::Backend> build_backend(const RunArgs& args, const eka::RolloutConfig& config,
                                            size_t question_no, int slot) {
    eka::BackendConfig backend = config.backend;
    if (!args.scripts_dir.empty() && backend.kind != eka::BackendKind::HttpEndpoint) {
        const std::string ext =
            backend.kind == eka::BackendKind::ScriptedMock ? ".jsonl" : ".json";
        backend.script = question_script(args.scripts_dir, question_no, slot, ext);
    }
    backend.validate();
    return std::shared_ptr<eka::Backend>(eka::make_backend(backend));
}

int cmd_index(const IndexArgs& args) {
    if (fs::exists(args.out) && !args.force) {
        throw eka::UserError("index exists: " + args.out + " (pass --force to rebuild)");
    }
    eka::RetrieverConfig config = args.retriever;
    config.backend = args.retriever_backend == "lexical" ? eka::RetrieverBackend::Lexical
                                                         : eka::RetrieverBackend::EmbeddingEndpoint;
    eka::Corpus corpus = eka::ingest_corpus(args.corpus, args.chunk_size, args.chunk_overlap);
    const eka::Index index = eka::build_index(std::move(corpus), config);
    eka::save_index(index, args.out);
    std::cout << index.corpus.documents.size() << " documents, " << index.corpus.chunks.size()
              << " chunks\n";
    if (config.backend == eka::RetrieverBackend::Lexical) {
        std::cout << "terms: " << index.lexical.term_count() << "\n";
    }
    std::cout << "wrote " << args.out << "\n";
    return 0;
}

void print_run_summary(const eka::Trajectory& traj) {
    std::cout << "answer: " << traj.final_answer.value_or("-") << "\n";
    std::cout << "turns: " << traj.turn_count << "\n";
    std::cout << "termination: " << eka::termination_name(traj.termination) << "\n";
}

int cmd_run(const RunArgs& args) {
    if (args.question.empty()) throw eka::UserError("run requires --question");
    const eka::RolloutConfig config = rollout_config(args);
    const eka::Index index = eka::load_index(args.index);
    eka::RolloutEngine engine(index, build_backend(args, config, 1, 0), config);
    const eka::Trajectory traj = engine.run(args.question);
    print_run_summary(traj);
    if (!args.dump_trajectory.empty()) {
        eka::dump_trajectory(traj, args.dump_trajectory);
        std::cout << "trajectory: " << args.dump_trajectory << "\n";
    }
    return 0;
}

int cmd_eval(const RunArgs& args) {
    if (args.dataset.empty()) throw eka::UserError("eval requires --dataset");
    if (args.group_size < 1) throw eka::UserError("--group-size must be >= 1");
    const eka::RolloutConfig config = rollout_config(args);
    const eka::Index index = eka::load_index(args.index);
    const std::vector<eka::DatasetItem> items = eka::load_dataset(args.dataset);

    std::vector<eka::Trajectory> trajectories;
    for (size_t i = 0; i < items.size(); ++i) {
        const size_t question_no = i + 1;
        if (args.group_size == 1) {
            eka::RolloutEngine engine(index, build_backend(args, config, question_no, 0), config);
            trajectories.push_back(engine.run(items[i].question));
            continue;
        }
        const eka::BackendFactory factory = [&](int slot) {
            return build_backend(args, config, question_no, slot + 1);
        };
        const eka::GroupRollout group = eka::run_group(index, factory, config, items[i].question,
                                                       items[i].golden_answers, args.group_size);
        std::cout << "group[" << question_no << "] rewards: " << join_doubles(group.rewards)
                  << "\n";
        std::cout << "group[" << question_no
                  << "] advantages: " << join_doubles(group.advantages.values) << "\n";
        // On-policy inspection of the surrogate: current == old == ref, so the
        // ratio is 1 everywhere and the value reduces to the advantage mean.
        bool have_tokens = true;
        std::vector<std::vector<eka::TokenProbRecord>> members;
        for (const auto& member : group.members) {
            std::vector<eka::TokenProbRecord> records;
            for (const auto& token : member.trajectory.tokens) {
                records.push_back({token.logprob, token.logprob, token.logprob});
            }
            if (records.empty()) have_tokens = false;
            members.push_back(std::move(records));
        }
        if (have_tokens) {
            const eka::ObjectiveBreakdown breakdown =
                eka::grpo_objective(members, group.advantages);
            std::cout << "group[" << question_no << "] objective: " << fmt(breakdown.total)
                      << " (clip fraction " << fmt(breakdown.clip_fraction) << ")\n";
        }
        trajectories.push_back(group.members.front().trajectory);
    }

    eka::ReportMeta meta;
    meta.config_fingerprint = eka::config_fingerprint(config);
    meta.dataset_fingerprint = eka::fnv1a_hex(eka::read_file(args.dataset));
    meta.eka_enabled = config.eka_enabled;
    eka::HashedEmbedder embedder;
    const eka::EvalReport report =
        eka::assemble_report(trajectories, items, meta, index.corpus, embedder);
    std::cout << eka::report_table(report);
    if (!args.report.empty()) {
        eka::save_report(report, args.report);
        std::cout << "report: " << args.report << "\n";
    }
    if (!args.entropy_csv_path.empty()) {
        eka::write_file_atomic(args.entropy_csv_path, eka::entropy_csv(trajectories));
        std::cout << "entropy csv: " << args.entropy_csv_path << "\n";
    }
    return 0;
}

int cmd_compare(const std::string& first_path, const std::string& second_path) {
    const eka::EvalReport first = eka::load_report(first_path);
    const eka::EvalReport second = eka::load_report(second_path);
    const eka::ReportDelta delta = eka::compare_reports(first, second);

    char row[160];
    std::snprintf(row, sizeof(row), "%-18s  %10s  %10s  %10s\n", "metric", "first", "second",
                  "delta");
    std::cout << row;
    auto print_row = [&](const char* name, double a, double b, double d) {
        std::snprintf(row, sizeof(row), "%-18s  %10.4f  %10.4f  %10s\n", name, a, b,
                      fmt_signed(d).c_str());
        std::cout << row;
    };
    print_row("EM", first.em, second.em, delta.em);
    print_row("F1", first.f1, second.f1, delta.f1);
    if (delta.retrieval_similarity) {
        print_row("R-S", *first.retrieval_similarity, *second.retrieval_similarity,
                  *delta.retrieval_similarity);
    }
    if (delta.retrieval_similarity_late) {
        print_row("R-S (late)", *first.retrieval_similarity_late,
                  *second.retrieval_similarity_late, *delta.retrieval_similarity_late);
    }
    print_row("turns", first.average_turns, second.average_turns, delta.average_turns);
    for (const auto& [region, d] : delta.region_entropy) {
        double a = 0.0, b = 0.0;
        for (const auto& entry : first.region_entropies) {
            if (eka::kind_name(entry.region) == region) a = entry.mean_entropy;
        }
        for (const auto& entry : second.region_entropies) {
            if (eka::kind_name(entry.region) == region) b = entry.mean_entropy;
        }
        print_row(("entropy[" + region + "]").c_str(), a, b, d);
    }
    return 0;
}

int cmd_verify_theory(const std::string& worlds_dir) {
    std::vector<fs::path> files;
    if (!fs::is_directory(worlds_dir)) {
        throw eka::UserError("not a directory: " + worlds_dir);
    }
    for (const auto& entry : fs::directory_iterator(worlds_dir)) {
        if (entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw eka::UserError("no world files in " + worlds_dir);

    bool all_ok = true;
    for (const auto& file : files) {
        try {
            const eka::DiscreteWorld world = eka::DiscreteWorld::load(file.string());
            const eka::WorldCheck check = eka::verify_world(world);
            if (check.ok) {
                std::cout << "[ok] " << check.world;
                if (check.comparison) {
                    std::cout << " (grounded-first gain " << fmt(check.comparison->grounded_gain)
                              << " vs " << fmt(check.comparison->ungrounded_gain) << ")";
                }
                std::cout << "\n";
            } else {
                all_ok = false;
                for (const auto& failure : check.failures) {
                    std::cout << "[violation] " << check.world << ": " << failure << "\n";
                }
            }
        } catch (const eka::UserError& e) {
            all_ok = false;
            std::cout << "[error] " << file.string() << ": " << e.what() << "\n";
        }
    }
    return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"iterative retrieval-augmented rollout harness"};
    app.require_subcommand(1);
    app.set_config("--config", "", "INI options file; command-line flags win");

    IndexArgs index_args;
    CLI::App* index_cmd = app.add_subcommand("index", "ingest a corpus and build an index");
    index_cmd->add_option("--corpus", index_args.corpus, "line-delimited document file")
        ->required();
    index_cmd->add_option("--out", index_args.out, "output index file")->required();
    index_cmd->add_option("--chunk-size", index_args.chunk_size, "tokens per chunk");
    index_cmd->add_option("--chunk-overlap", index_args.chunk_overlap,
                          "tokens shared between consecutive chunks");
    index_cmd->add_option("--retriever", index_args.retriever_backend, "lexical | embedding")
        ->check(CLI::IsMember({"lexical", "embedding"}));
    index_cmd->add_option("--k", index_args.retriever.k, "default passages per retrieval");
    index_cmd->add_option("--k1", index_args.retriever.k1, "term-frequency saturation");
    index_cmd->add_option("--b", index_args.retriever.b, "length normalization");
    index_cmd->add_option("--embed-endpoint", index_args.retriever.endpoint,
                          "embeddings endpoint (embedding retriever)");
    index_cmd->add_option("--embed-model", index_args.retriever.model, "embeddings model");
    index_cmd->add_flag("--force", index_args.force, "overwrite an existing index");

    RunArgs run_args;
    CLI::App* run_cmd = app.add_subcommand("run", "answer one question with the rollout loop");
    add_rollout_options(run_cmd, run_args);
    run_cmd->add_option("--question", run_args.question, "question text")->required();
    run_cmd->add_option("--dump-trajectory", run_args.dump_trajectory,
                        "write the full trajectory record here");

    RunArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("eval", "run a dataset and emit a report");
    add_rollout_options(eval_cmd, eval_args);
    eval_cmd->add_option("--dataset", eval_args.dataset, "line-delimited question file")
        ->required();
    eval_cmd->add_option("--scripts-dir", eval_args.scripts_dir,
                         "per-question scripts: q<N>.jsonl (mock) or q<N>.json (policy-sim), "
                         "q<N>_s<S> for group slots");
    eval_cmd->add_option("--group-size", eval_args.group_size,
                         "rollouts per question; >1 prints group advantage summaries");
    eval_cmd->add_option("--report", eval_args.report, "write the line-delimited report here");
    eval_cmd->add_option("--entropy-csv", eval_args.entropy_csv_path,
                         "write per-step region entropy CSV here");

    std::string compare_first, compare_second;
    CLI::App* compare_cmd = app.add_subcommand("compare", "print delta rows between two reports");
    compare_cmd->add_option("first", compare_first, "baseline report")->required();
    compare_cmd->add_option("second", compare_second, "comparison report")->required();

    std::string worlds_dir;
    CLI::App* verify_cmd =
        app.add_subcommand("verify-theory", "run the information-theoretic invariant suite");
    verify_cmd->add_option("--worlds", worlds_dir, "directory of world files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (index_cmd->parsed()) return cmd_index(index_args);
        if (run_cmd->parsed()) return cmd_run(run_args);
        if (eval_cmd->parsed()) return cmd_eval(eval_args);
        if (compare_cmd->parsed()) return cmd_compare(compare_first, compare_second);
        if (verify_cmd->parsed()) return cmd_verify_theory(worlds_dir);
    } catch (const eka::RolloutError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const eka::UserError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const eka::TransportError& e) {
        std::cerr << "transport error: " << e.what() << "\n";
        return 2;
    } catch (const eka::ProtocolError& e) {
        std::cerr << "protocol error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
