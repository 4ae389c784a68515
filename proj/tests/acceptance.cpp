// Acceptance gate: one line per criterion, nonzero exit when any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "eka/common.hpp"
#include "eka/corpus.hpp"
#include "eka/eval_report.hpp"
#include "eka/info_theory.hpp"
#include "eka/llm_backend.hpp"
#include "eka/metrics.hpp"
#include "eka/prompts.hpp"
#include "eka/retrieval.hpp"
#include "eka/rl_math.hpp"
#include "eka/rollout.hpp"
#include "eka/tag_protocol.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace eka;

namespace {

const std::string kFixtures = EKA_FIXTURES_DIR;
const std::string kBin = EKA_CLI_BIN;

struct Failure {
    std::string detail;
};

void check(bool condition, const std::string& detail) {
    if (!condition) throw Failure{detail};
}

// ---- criterion 1 ----------------------------------------------------------

// Naive transcription of the group surrogate, long doubles, no shared code
// with the library implementation.
long double naive_group_objective(const std::vector<std::vector<TokenProbRecord>>& members,
                                  const std::vector<double>& advantages, double eps,
                                  double beta) {
    long double group_sum = 0.0L;
    for (size_t i = 0; i < members.size(); ++i) {
        long double token_sum = 0.0L;
        for (const auto& token : members[i]) {
            const long double ratio =
                std::exp((long double)token.logprob_current - (long double)token.logprob_old);
            long double clipped = ratio;
            if (clipped < 1.0L - eps) clipped = 1.0L - eps;
            if (clipped > 1.0L + eps) clipped = 1.0L + eps;
            const long double a = advantages[i];
            const long double surrogate = std::min(ratio * a, clipped * a);
            const long double rho =
                std::exp((long double)*token.logprob_ref - (long double)token.logprob_current);
            token_sum += surrogate - (long double)beta * (rho - std::log(rho) - 1.0L);
        }
        group_sum += token_sum / (long double)members[i].size();
    }
    return group_sum / (long double)members.size();
}

void criterion_grpo_oracle() {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> group_size(1, 5);
    std::uniform_int_distribution<int> member_len(1, 10);
    std::uniform_real_distribution<double> logprob(-3.0, 0.0);
    std::uniform_real_distribution<double> reward_draw(0.0, 1.0);

    for (int trial = 0; trial < 200; ++trial) {
        const int g = group_size(rng);
        std::vector<std::vector<TokenProbRecord>> members((size_t)g);
        std::vector<double> rewards((size_t)g);
        for (int i = 0; i < g; ++i) {
            const int len = member_len(rng);
            for (int t = 0; t < len; ++t) {
                TokenProbRecord record;
                record.logprob_current = logprob(rng);
                record.logprob_old = logprob(rng);
                record.logprob_ref = logprob(rng);
                members[(size_t)i].push_back(record);
            }
            rewards[(size_t)i] = reward_draw(rng);
        }
        const AdvantageVector advantages = grpo_advantages(rewards);
        const ObjectiveBreakdown got = grpo_objective(members, advantages, 0.2, 0.001);
        const long double want =
            naive_group_objective(members, advantages.values, 0.2, 0.001);
        check(std::fabs((long double)got.total - want) < 1e-12L,
              "objective drifted from the naive transcription on trial " +
                  std::to_string(trial));
    }

    const AdvantageVector hand = grpo_advantages({1.0, 1.0, 0.0, 0.0});
    check(hand.values == std::vector<double>{1.0, 1.0, -1.0, -1.0},
          "advantages of [1,1,0,0] are not [1,1,-1,-1]");
    const AdvantageVector flat = grpo_advantages({0.7, 0.7, 0.7});
    check(flat.values == std::vector<double>(3, 0.0),
          "zero-variance group advantages are not exactly zero");
}

// ---- criterion 2 ----------------------------------------------------------

void criterion_ppo_clip() {
    check(clipped_term(1.5, 1.0, 0.2) == 1.2, "clipped_term(1.5, 1, 0.2) != 1.2");
    check(clipped_term(0.7, -2.0, 0.2) == -1.6, "clipped_term(0.7, -2, 0.2) != -1.6");

    // Ratios 1.5 (clipped, strictly smaller) and 1.0 (branches equal).
    std::vector<TokenProbRecord> tokens(2);
    tokens[0].logprob_current = std::log(1.5);
    tokens[0].logprob_old = 0.0;
    tokens[1].logprob_current = -0.5;
    tokens[1].logprob_old = -0.5;
    const ObjectiveBreakdown half = ppo_objective(tokens, {1.0, 1.0}, 0.2);
    check(half.clip_fraction == 0.5, "clip_fraction != 0.5 on the constructed pair");
    check(std::fabs(half.total - (1.2 + 1.0) / 2.0) < 1e-12, "ppo total off on the pair");

    const ObjectiveBreakdown none = ppo_objective({tokens[1]}, {1.0}, 0.2);
    check(none.clip_fraction == 0.0, "clip_fraction != 0 when nothing clips");
}

// ---- criterion 3 ----------------------------------------------------------

std::string random_valid_text(std::mt19937_64& rng) {
    static const std::vector<TagKind> kinds = {TagKind::Think, TagKind::Query, TagKind::Answer,
                                               TagKind::Knowledge};
    static const std::string alphabet = "abc <>/qwerty?!{}\"0123456789\n\t";
    std::uniform_int_distribution<size_t> seg_count(0, 6);
    std::uniform_int_distribution<size_t> len(0, 24);
    std::uniform_int_distribution<size_t> pick(0, alphabet.size() - 1);
    std::uniform_int_distribution<size_t> kind_pick(0, kinds.size() - 1);
    std::uniform_int_distribution<int> gap(0, 2);

    std::string out;
    const size_t n = seg_count(rng);
    for (size_t s = 0; s < n; ++s) {
        const TagKind kind = kinds[kind_pick(rng)];
        std::string content;
        const size_t content_len = len(rng);
        for (size_t i = 0; i < content_len; ++i) content += alphabet[pick(rng)];
        // Content must not embed its own closing delimiter; removing "</" is
        // enough because every close starts with it.
        for (size_t at = content.find("</"); at != std::string::npos;
             at = content.find("</")) {
            content.erase(at, 2);
        }
        out += std::string(open_delimiter(kind)) + content + std::string(close_delimiter(kind));
        for (int i = gap(rng); i > 0; --i) out += ' ';
    }
    return out;
}

std::vector<ParseEvent> parse_fragmented(const std::string& text, std::mt19937_64& rng) {
    std::uniform_int_distribution<size_t> step(1, 7);
    StreamParser parser;
    std::vector<ParseEvent> events;
    size_t at = 0;
    while (at < text.size()) {
        const size_t take = std::min(step(rng), text.size() - at);
        for (const auto& event : parser.feed(text.substr(at, take))) events.push_back(event);
        while (parser.halted()) {
            for (const auto& event : parser.resume()) events.push_back(event);
        }
        at += take;
    }
    for (const auto& event : parser.finish()) events.push_back(event);
    return events;
}

void criterion_parser_invariance() {
    std::mt19937_64 rng(202);
    for (int trial = 0; trial < 500; ++trial) {
        const std::string text = random_valid_text(rng);
        const std::vector<ParseEvent> whole = parse_events(text);
        for (int fragmentation = 0; fragmentation < 3; ++fragmentation) {
            const std::vector<ParseEvent> pieces = parse_fragmented(text, rng);
            check(pieces == whole,
                  "fragmented event stream diverged on trial " + std::to_string(trial));
        }

        const ParseSummary summary = parse_all(text);
        check(summary.malformed.empty(), "generator produced malformed text");
        const ParseSummary again = parse_all(serialize_segments(summary.segments));
        check(again.segments.size() == summary.segments.size(),
              "serialize round trip changed the segment count");
        for (size_t i = 0; i < summary.segments.size(); ++i) {
            check(again.segments[i].kind == summary.segments[i].kind &&
                      again.segments[i].content == summary.segments[i].content,
                  "serialize round trip changed a segment");
        }
    }
}

// ---- criterion 4 ----------------------------------------------------------

int run_tool(const std::string& args) {
    const std::string command = kBin + " " + args + " > /dev/null 2>&1";
    const int status = std::system(command.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void criterion_golden_trajectories() {
    const fs::path work = "/tmp/eka_acceptance";
    fs::create_directories(work);
    const std::string index = (work / "films.idx").string();
    check(run_tool("index --corpus " + kFixtures + "/corpus_films.jsonl --out " + index +
                   " --force") == 0,
          "index build failed");

    const std::string eka_dump = (work / "eka.jsonl").string();
    check(run_tool("run --index " + index + " --script " + kFixtures +
                   "/scripts/eka_case.jsonl --dump-trajectory " + eka_dump +
                   " --question \"Which film has the director born later, I'll Tell The World "
                   "or Saranggola?\"") == 0,
          "early-knowledge run failed");
    check(read_file(eka_dump) == read_file(kFixtures + "/golden/trajectory_eka.jsonl"),
          "early-knowledge trajectory differs from the frozen dump");

    const Trajectory eka_traj = load_trajectory(eka_dump);
    check(eka_traj.final_answer == "Saranggola", "final answer is not Saranggola");
    int searches = 0;
    for (const auto& turn : eka_traj.turns) searches += turn.query.has_value() ? 1 : 0;
    check(searches == 2, "expected exactly two in-loop searches");
    check(validate_pipeline(eka_traj.segments, eka_traj.eka_enabled).well_formed,
          "pipeline is not well formed");

    const std::string base_dump = (work / "baseline.jsonl").string();
    check(run_tool("run --index " + index + " --eka off --strict --script " + kFixtures +
                   "/scripts/baseline_case.jsonl --dump-trajectory " + base_dump +
                   " --question \"Which film has the director born later, I'Ll Tell The World "
                   "or Saranggola?\"") == 0,
          "baseline run failed");
    check(read_file(base_dump) == read_file(kFixtures + "/golden/trajectory_baseline.jsonl"),
          "baseline trajectory differs from the frozen dump");

    const Trajectory base_traj = load_trajectory(base_dump);
    check(base_traj.final_answer == "I'Ll Tell The World",
          "baseline answer is not the frozen wrong one");
    int injections = 0;
    for (const auto& turn : base_traj.turns) {
        if (turn.invalid_query && turn.injected == std::string(kInvalidQueryFeedback)) {
            ++injections;
        }
    }
    check(injections >= 2, "expected at least two invalid-format feedback injections");
}

// ---- criterion 5 ----------------------------------------------------------

std::vector<std::string> reference_tokens(const std::string& text) {
    std::string folded;
    for (char c : text) {
        const unsigned char u = (unsigned char)c;
        if (std::isalnum(u)) {
            folded += (char)std::tolower(u);
        } else if (std::isspace(u)) {
            folded += ' ';
        }
        // everything else: punctuation, dropped
    }
    std::istringstream in(folded);
    std::vector<std::string> tokens;
    std::string token;
    while (in >> token) tokens.push_back(token);
    return tokens;
}

double reference_f1(const std::string& pred, const std::string& gold) {
    const auto p = reference_tokens(pred);
    const auto g = reference_tokens(gold);
    if (p.empty() && g.empty()) return 1.0;
    if (p.empty() || g.empty()) return 0.0;
    std::map<std::string, int> counts;
    for (const auto& token : g) ++counts[token];
    int overlap = 0;
    for (const auto& token : p) {
        auto it = counts.find(token);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    if (overlap == 0) return 0.0;
    const double precision = (double)overlap / (double)p.size();
    const double recall = (double)overlap / (double)g.size();
    return 2.0 * precision * recall / (precision + recall);
}

void criterion_metric_oracles() {
    const std::vector<std::pair<std::string, std::string>> cases = {
        {"the kite", "saranggola the kite"},
        {"Saranggola", "saranggola"},
        {"The  KITE?", "the kite"},
        {"kite", "the kite"},
        {"", ""},
        {"", "word"},
        {"word", ""},
        {"zz", "yy"},
        {"a a b", "a b b"},
        {"I'll Tell the World", "ill tell the world"},
        {"1945 comedy film", "a 1945 comedy"},
        {"Gil Portes", "gil portes!"},
        {"the the the", "the"},
        {"one two three", "three two one"},
        {"Leslie Goodwins", "leslie goodwins director"},
        {"a", "a an the"},
        {"December 11, 1890", "11 December 1890"},
        {"film director", "director"},
        {"x y z w", "x y"},
        {"answer", "answer answer"},
    };
    check(cases.size() == 20, "hand case count is not 20");
    bool saw_point_eight = false;
    for (const auto& [pred, gold] : cases) {
        const double want_f1 = reference_f1(pred, gold);
        const double got_f1 = f1(pred, {gold});
        check(std::fabs(got_f1 - want_f1) < 1e-12,
              "f1 disagrees with the reference on \"" + pred + "\" vs \"" + gold + "\"");
        const int want_em = reference_tokens(pred) == reference_tokens(gold) ? 1 : 0;
        check(exact_match(pred, {gold}) == want_em,
              "em disagrees with the reference on \"" + pred + "\"");
        if (std::fabs(want_f1 - 0.8) < 1e-12) saw_point_eight = true;
    }
    check(saw_point_eight, "no 0.8 f1 case among the hand cases");

    std::mt19937_64 rng(303);
    const std::vector<std::string> words = {"film",  "director", "kite", "world",
                                            "the",   "a",        "1945", "drama",
                                            "gil",   "leslie",   "born", "later"};
    std::uniform_int_distribution<size_t> len(0, 5);
    std::uniform_int_distribution<size_t> pick(0, words.size() - 1);
    std::uniform_int_distribution<int> coin(0, 1);
    for (int trial = 0; trial < 1000; ++trial) {
        std::string gold;
        const size_t n = len(rng);
        for (size_t i = 0; i < n; ++i) {
            if (!gold.empty()) gold += ' ';
            gold += words[pick(rng)];
        }
        std::string pred = gold;
        if (coin(rng)) {
            for (auto& c : pred) {
                if (coin(rng)) c = (char)std::toupper((unsigned char)c);
            }
            if (coin(rng)) pred += ".";
        } else if (n > 0 && coin(rng)) {
            pred += " extra";  // EM 0 branch
        }
        if (exact_match(pred, {gold}) == 1) {
            check(std::fabs(f1(pred, {gold}) - 1.0) < 1e-12,
                  "em 1 but f1 below 1 on trial " + std::to_string(trial));
        }
    }

    check(std::fabs(cosine_similarity({3.0, 4.0}, {4.0, 3.0}) - 0.96) < 1e-12,
          "cosine of (3,4) and (4,3) is not 0.96");
}

// ---- criterion 6 ----------------------------------------------------------

void criterion_entropy_estimator() {
    std::vector<std::pair<std::string, double>> uniform5;
    for (int i = 0; i < 5; ++i) uniform5.emplace_back("t" + std::to_string(i), std::log(0.2));
    check(std::fabs(renormalized_entropy(uniform5) - std::log(5.0)) < 1e-12,
          "uniform over 5 is not ln 5");
    check(renormalized_entropy({{"only", -1.25}}) == 0.0, "deterministic token entropy not 0");

    for (const char* name : {"trajectory_eka.jsonl", "trajectory_baseline.jsonl"}) {
        const Trajectory traj = load_trajectory(kFixtures + "/golden/" + std::string(name));
        check(!region_entropy(traj, TagKind::Knowledge).has_value(),
              std::string(name) + ": knowledge region unexpectedly carries token entropy");
        size_t knowledge_segments = 0;
        for (const auto& segment : traj.segments) {
            if (segment.kind != TagKind::Knowledge) continue;
            ++knowledge_segments;
            check(!segment.token_span.has_value(),
                  std::string(name) + ": knowledge segment claims generated tokens");
            for (const auto& token : traj.tokens) {
                const bool overlaps = token.begin < segment.byte_span.end &&
                                      segment.byte_span.begin < token.end;
                check(!overlaps,
                      std::string(name) + ": generated token overlaps injected knowledge");
            }
        }
        check(knowledge_segments > 0, std::string(name) + ": no knowledge injections to test");
        check(region_entropy(traj, TagKind::Think).has_value(),
              std::string(name) + ": think region lost its tokens");
    }
}

// ---- criterion 7 ----------------------------------------------------------

DiscreteWorld random_world(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> var_count(2, 4);
    std::uniform_int_distribution<int> state_count(2, 4);
    const int n = var_count(rng);
    std::vector<WorldVariable> vars;
    size_t cells = 1;
    for (int v = 0; v < n; ++v) {
        vars.push_back({"V" + std::to_string(v), state_count(rng)});
        cells *= (size_t)vars.back().states;
    }
    std::uniform_real_distribution<double> mass(0.05, 1.0);
    std::vector<double> joint(cells);
    double total = 0.0;
    for (auto& p : joint) total += (p = mass(rng));
    for (auto& p : joint) p /= total;
    return DiscreteWorld("rand", vars, joint, "V0", "V1");
}

void criterion_information_suite() {
    std::mt19937_64 rng(404);
    for (int trial = 0; trial < 100; ++trial) {
        const DiscreteWorld world = random_world(rng);
        const std::vector<std::string> evidence = world.evidence_variables();

        const PotentialTrace trace = potential_trace(world, evidence);
        long double gain_sum = 0.0L;
        for (double g : trace.gains) gain_sum += g;
        const double joint_info = mutual_information(world, "V1", evidence, {"V0"});
        check(std::fabs((double)gain_sum - joint_info) < 1e-12,
              "chain rule broke on random world " + std::to_string(trial));

        for (size_t t = 0; t + 1 < trace.potentials.size(); ++t) {
            check(trace.potentials[t] + 1e-12 >= trace.potentials[t + 1],
                  "potential increased on random world " + std::to_string(trial));
        }
        for (size_t t = 0; t <= evidence.size(); ++t) {
            const std::vector<std::string> history(evidence.begin(),
                                                   evidence.begin() + (ptrdiff_t)t);
            check(fano_bound(world, history) + 1e-12 >= exact_bayes_error(world, history),
                  "fano bound fell below the exact error on world " + std::to_string(trial));
        }
    }

    size_t strict_seen = 0;
    for (const auto& entry : fs::directory_iterator(kFixtures + "/worlds")) {
        if (entry.path().extension() != ".json") continue;
        const DiscreteWorld world = DiscreteWorld::load(entry.path().string());
        const WorldCheck result = verify_world(world);
        check(result.ok, world.name() + ": " +
                             (result.failures.empty() ? "unknown failure"
                                                      : result.failures.front()));
        check(result.comparison.has_value(), world.name() + ": no policy comparison ran");
        check(result.comparison->grounded_gain + 1e-12 >= result.comparison->ungrounded_gain,
              world.name() + ": grounded-first gain fell below the blind policy");
        if (world.expect_strict_improvement()) {
            ++strict_seen;
            check(result.comparison->strict_improvement,
                  world.name() + ": expected strict improvement is missing");
        }
    }
    check(strict_seen >= 2, "strict-improvement subfamily is too small");
}

// ---- criterion 8 ----------------------------------------------------------

void criterion_turn_reduction() {
    const Index index =
        build_index(ingest_corpus(kFixtures + "/corpus_films.jsonl", 128, 32), RetrieverConfig{});

    std::vector<double> eka_turns, baseline_turns;
    bool strict_somewhere = false;
    for (const char* name :
         {"two_hop_directors.json", "single_hop_director.json", "opaque_question.json"}) {
        const std::string path = kFixtures + "/policy/" + std::string(name);
        const PolicySpec spec = load_policy_spec(path);
        const nlohmann::json doc = nlohmann::json::parse(read_file(path));
        const std::string question = doc.at("question").get<std::string>();

        auto run_with = [&](bool eka_enabled) {
            RolloutConfig config;
            config.eka_enabled = eka_enabled;
            config.prompt_template =
                eka_enabled ? PromptTemplate::Eka : PromptTemplate::Baseline;
            config.backend.kind = BackendKind::PolicySim;
            config.backend.script = path;
            RolloutEngine engine(index, std::make_shared<SimulatedPolicyBackend>(spec), config);
            return engine.run(question);
        };
        const Trajectory with_eka = run_with(true);
        const Trajectory without = run_with(false);
        check(with_eka.termination == Termination::Answered,
              std::string(name) + ": early-knowledge run did not answer");
        check(without.termination == Termination::Answered,
              std::string(name) + ": baseline run did not answer");
        check(with_eka.final_answer == spec.answer && without.final_answer == spec.answer,
              std::string(name) + ": a run answered wrongly");
        check(with_eka.turn_count <= without.turn_count,
              std::string(name) + ": early knowledge took more turns than baseline");
        strict_somewhere = strict_somewhere || with_eka.turn_count < without.turn_count;
        eka_turns.push_back((double)with_eka.turn_count);
        baseline_turns.push_back((double)without.turn_count);
    }
    double eka_mean = 0.0, baseline_mean = 0.0;
    for (double t : eka_turns) eka_mean += t;
    for (double t : baseline_turns) baseline_mean += t;
    eka_mean /= (double)eka_turns.size();
    baseline_mean /= (double)baseline_turns.size();
    check(eka_mean <= baseline_mean, "average turns did not drop with early knowledge");
    check(strict_somewhere, "no fixture showed a strict turn reduction");
}

// ---- criterion 9 ----------------------------------------------------------

std::vector<RetrievedPassage> brute_force_bm25(const Corpus& corpus, const std::string& query,
                                               int k, double k1, double b) {
    auto terms = analyze_terms(query);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());

    const size_t n = corpus.chunks.size();
    std::vector<std::map<std::string, int>> tf(n);
    double total_len = 0.0;
    for (size_t c = 0; c < n; ++c) {
        for (const auto& term : analyze_terms(corpus.chunks[c].text)) ++tf[c][term];
        for (const auto& [term, count] : tf[c]) total_len += count;
    }
    const double avg = total_len / (double)n;

    std::vector<RetrievedPassage> hits;
    for (size_t c = 0; c < n; ++c) {
        double score = 0.0;
        bool candidate = false;
        double len = 0.0;
        for (const auto& [term, count] : tf[c]) len += count;
        for (const auto& term : terms) {
            const auto it = tf[c].find(term);
            if (it == tf[c].end()) continue;
            candidate = true;
            double df = 0.0;
            for (size_t other = 0; other < n; ++other) df += tf[other].count(term) ? 1.0 : 0.0;
            const double idf = std::log(1.0 + ((double)n - df + 0.5) / (df + 0.5));
            const double freq = (double)it->second;
            const double norm = 1.0 - b + b * len / avg;
            score += idf * freq * (k1 + 1.0) / (freq + k1 * norm);
        }
        if (candidate) hits.push_back({corpus.chunks[c].chunk_id, score, 0});
    }
    std::sort(hits.begin(), hits.end(), [](const auto& x, const auto& y) {
        if (x.score != y.score) return x.score > y.score;
        return x.chunk_id < y.chunk_id;
    });
    if ((int)hits.size() > k) hits.resize((size_t)k);
    for (size_t i = 0; i < hits.size(); ++i) hits[i].rank = (int)i + 1;
    return hits;
}

void criterion_retrieval_oracle() {
    const std::string case_question =
        "Which film has the director born later, I'll Tell The World or Saranggola?";
    const std::vector<std::string> queries = {
        case_question,
        "Leslie Goodwins birth year",
        "Gil Portes birth year",
        "Saranggola director",
        "Spanish drama film",
        "the cat",
        "dogs bark",
        "born december",
    };
    const RetrieverConfig config;
    for (const char* corpus_file : {"corpus_films.jsonl", "corpus_tiny.jsonl"}) {
        const Corpus corpus = ingest_corpus(kFixtures + "/" + std::string(corpus_file), 128, 32);
        check(corpus.chunks.size() <= 20, "fixture corpus exceeds the enumerable size");
        const Index index = build_index(corpus, config);
        for (const auto& query : queries) {
            for (int k : {1, 5, 20}) {
                const auto want =
                    brute_force_bm25(index.corpus, query, k, config.k1, config.b);
                const auto got = retrieve(index, query, k);
                check(got.size() == want.size(),
                      "hit count differs from brute force on \"" + query + "\"");
                for (size_t i = 0; i < got.size(); ++i) {
                    check(got[i].chunk_id == want[i].chunk_id && got[i].rank == want[i].rank,
                          "ranking differs from brute force on \"" + query + "\"");
                    check(std::fabs(got[i].score - want[i].score) < 1e-12,
                          "score differs from brute force on \"" + query + "\"");
                }
            }
        }
    }

    const Index films =
        build_index(ingest_corpus(kFixtures + "/corpus_films.jsonl", 128, 32), config);
    const auto passages = early_knowledge(films, case_question, config);
    check(passages.size() == 5, "early knowledge is not five passages");
    bool saw_first = false, saw_second = false;
    for (const auto& passage : passages) {
        saw_first = saw_first || passage.chunk_id == "f04#0000";
        saw_second = saw_second || passage.chunk_id == "f08#0000";
    }
    check(saw_first && saw_second,
          "the two director passages are not both in the early top-5");
}

// ---- driver ----------------------------------------------------------------

struct Criterion {
    int number;
    const char* label;
    std::function<void()> body;
    double time_limit_seconds;  // 0 = no limit
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "group-relative objective and advantage oracle", criterion_grpo_oracle, 1.0},
        {2, "clipped surrogate hand values and clip fraction", criterion_ppo_clip, 0.0},
        {3, "parser re-chunking invariance and lossless round trip",
         criterion_parser_invariance, 5.0},
        {4, "case study runs reproduce the frozen dumps byte for byte",
         criterion_golden_trajectories, 0.0},
        {5, "em/f1/cosine agree with brute-force references", criterion_metric_oracles, 0.0},
        {6, "entropy estimator hand values and knowledge-region exclusion",
         criterion_entropy_estimator, 0.0},
        {7, "information-gain chain rule, bounds, and policy dominance",
         criterion_information_suite, 30.0},
        {8, "early knowledge never takes more turns, strictly fewer somewhere",
         criterion_turn_reduction, 0.0},
        {9, "lexical ranking equals brute force; director passages in top-5",
         criterion_retrieval_oracle, 0.0},
    };

    bool all_passed = true;
    for (const auto& criterion : criteria) {
        const auto start = std::chrono::steady_clock::now();
        std::string failure;
        try {
            criterion.body();
        } catch (const Failure& f) {
            failure = f.detail;
        } catch (const std::exception& e) {
            failure = std::string("unexpected error: ") + e.what();
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (failure.empty() && criterion.time_limit_seconds > 0.0 &&
            seconds >= criterion.time_limit_seconds) {
            failure = "exceeded the " + std::to_string(criterion.time_limit_seconds) +
                      "s budget";
        }
        if (failure.empty()) {
            std::printf("[PASS] criterion %d: %s (%.2fs)\n", criterion.number, criterion.label,
                        seconds);
        } else {
            all_passed = false;
            std::printf("[FAIL] criterion %d: %s: %s\n", criterion.number, criterion.label,
                        failure.c_str());
        }
    }
    return all_passed ? 0 : 1;
}
