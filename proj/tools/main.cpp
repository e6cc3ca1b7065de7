#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctxnmt/config.hpp"
#include "ctxnmt/corpus.hpp"
#include "ctxnmt/decode.hpp"
#include "ctxnmt/error.hpp"
#include "ctxnmt/eval.hpp"
#include "ctxnmt/gradcheck.hpp"
#include "ctxnmt/model.hpp"
#include "ctxnmt/serialize.hpp"
#include "ctxnmt/synthgen.hpp"
#include "ctxnmt/trainer.hpp"
#include "ctxnmt/vocab.hpp"

namespace {

using namespace ctxnmt;

// CTXNMT_SEED overrides the built-in default seed of every command; explicit
// config entries and --seed flags still win over it.
std::uint64_t default_seed() {
  const char* env = std::getenv("CTXNMT_SEED");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (end == env || *end != '\0') {
    throw ConfigError(std::string("CTXNMT_SEED must be a non-negative integer, got '") + env +
                      "'");
  }
  return v;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << content;
  if (!out) throw IoError("failed while writing '" + path + "'");
}

std::vector<TokenSentence> flat_sentences(const TokenDocuments& docs) {
  std::vector<TokenSentence> out;
  for (const auto& doc : docs) {
    for (const auto& sent : doc) out.push_back(sent);
  }
  return out;
}

// Hypotheses and references must align sentence for sentence.
void require_aligned(std::size_t hyps, std::size_t refs, const std::string& hyp_name,
                     const std::string& ref_name) {
  if (hyps != refs) {
    throw ContractError(hyp_name + " has " + std::to_string(hyps) + " sentences but " + ref_name +
                        " has " + std::to_string(refs));
  }
}

struct GenSynthArgs {
  SynthSpec spec;
  std::string src_path;
  std::string tgt_path;
  std::string key_path;
};

int cmd_gen_synth(const GenSynthArgs& args) {
  const SynthResult result = generate_synthetic(args.spec);
  write_text(args.src_path, serialize_side(result.corpus, Side::kSource));
  write_text(args.tgt_path, serialize_side(result.corpus, Side::kTarget));
  write_text(args.key_path, serialize_key(result.key));
  std::printf("documents: %zu\nsentences: %zu\nkeyed_slots: %zu\n",
              result.corpus.documents.size(), result.corpus.sentence_count(), result.key.size());
  return 0;
}

int cmd_build_vocab(const std::string& input, std::size_t cap, const std::string& output) {
  const TokenDocuments docs = parse_documents_file(input);
  std::vector<std::vector<std::string>> sentences;
  for (const auto& doc : docs) {
    for (const auto& sent : doc) sentences.push_back(sent);
  }
  const auto built = Vocabulary::build(sentences, cap);
  built.vocab.save(output);
  std::printf("tokens: %zu\nvocab_size: %zu\ncoverage: %.4f\n", built.total_tokens,
              built.vocab.size(), built.coverage);
  return 0;
}

struct TrainArgs {
  std::string config_path;
  std::string train_src;
  std::string train_tgt;
  std::string dev_src;
  std::string dev_tgt;
  std::string src_vocab_path;
  std::string tgt_vocab_path;
  std::string model_path;
  std::string log_path;  // empty logs to stdout
  std::optional<std::uint64_t> seed_flag;
};

template <typename T>
int run_train(const RunConfig& config, const TrainArgs& args) {
  const Vocabulary src_vocab = Vocabulary::load(args.src_vocab_path);
  const Vocabulary tgt_vocab = Vocabulary::load(args.tgt_vocab_path);
  const DocumentCorpus train_corpus = parse_parallel(args.train_src, args.train_tgt);
  const DocumentCorpus dev_corpus = parse_parallel(args.dev_src, args.dev_tgt);

  TranslationModel<T> model(config.model_config(src_vocab.size(), tgt_vocab.size()),
                            config.seed);
  TrainOptions opt;
  opt.epochs = config.epochs;
  opt.patience = config.patience;
  opt.batch_size = config.batch_size;
  opt.lr = config.lr;
  opt.clip_norm = config.clip_norm;
  opt.beam = config.beam;
  opt.shuffle_seed = config.seed;

  std::ofstream log_file;
  std::ostream* log = &std::cout;
  if (!args.log_path.empty()) {
    log_file.open(args.log_path, std::ios::binary);
    if (!log_file) throw IoError("cannot write log file '" + args.log_path + "'");
    log = &log_file;
  }

  const TrainResult result =
      train_model(model, train_corpus, dev_corpus, src_vocab, tgt_vocab, opt, log);
  save_model(args.model_path, model, Vocabulary::file_hash(args.src_vocab_path),
             Vocabulary::file_hash(args.tgt_vocab_path));

  char line[128];
  std::snprintf(line, sizeof line, "best_epoch %zu dev_bleu %.2f\n", result.best_epoch,
                100.0 * result.best_dev_bleu);
  (*log) << line;
  return 0;
}

int cmd_train(const TrainArgs& args) {
  RunConfig defaults;
  defaults.seed = default_seed();
  RunConfig config = load_config(args.config_path, defaults);
  if (args.seed_flag) config.seed = *args.seed_flag;
  config.validate();
  if (config.precision == "float") return run_train<float>(config, args);
  return run_train<double>(config, args);
}

struct TranslateArgs {
  std::string model_path;
  std::string src_vocab_path;
  std::string tgt_vocab_path;
  std::string input_path;
  std::string output_path;
  std::size_t beam = 1;
};

void check_vocab_hash(const std::string& vocab_path, const std::string& expected,
                      const char* side) {
  const std::string actual = Vocabulary::file_hash(vocab_path);
  if (actual != expected) {
    throw ConfigError(std::string(side) + " vocabulary '" + vocab_path +
                      "' does not match the one the model was trained with");
  }
}

// Translation uses 32-bit floats, the model file's storage precision, so
// results are identical no matter which precision trained the weights.
int cmd_translate(const TranslateArgs& args) {
  LoadedModel<float> loaded = load_model<float>(args.model_path);
  check_vocab_hash(args.src_vocab_path, loaded.meta.src_vocab_hash, "source");
  check_vocab_hash(args.tgt_vocab_path, loaded.meta.tgt_vocab_hash, "target");
  const Vocabulary src_vocab = Vocabulary::load(args.src_vocab_path);
  const Vocabulary tgt_vocab = Vocabulary::load(args.tgt_vocab_path);

  const TokenDocuments docs = parse_documents_file(args.input_path);
  DecodeOptions opt;
  opt.beam = args.beam;

  TokenDocuments hyps;
  hyps.reserve(docs.size());
  for (const auto& doc : docs) {
    std::vector<std::vector<int>> sentences;
    sentences.reserve(doc.size());
    for (const auto& sent : doc) sentences.push_back(src_vocab.encode(sent));
    std::vector<TokenSentence> hyp_doc;
    for (const auto& ids : translate_document(loaded.model, sentences, opt)) {
      hyp_doc.push_back(tgt_vocab.decode(ids));
    }
    hyps.push_back(std::move(hyp_doc));
  }
  write_text(args.output_path, serialize_documents(hyps));
  return 0;
}

int cmd_bleu(const std::string& hyp_path, const std::string& ref_path, bool cased) {
  const auto hyps = flat_sentences(parse_documents_file(hyp_path));
  const auto refs = flat_sentences(parse_documents_file(ref_path));
  require_aligned(hyps.size(), refs.size(), hyp_path, ref_path);
  std::vector<std::vector<TokenSentence>> ref_sets;
  ref_sets.reserve(refs.size());
  for (const auto& ref : refs) ref_sets.push_back({ref});
  std::fputs(format_bleu_report(corpus_bleu(hyps, ref_sets, !cased)).c_str(), stdout);
  return 0;
}

int cmd_signtest(const std::string& hyp_a_path, const std::string& hyp_b_path,
                 const std::string& ref_path) {
  const auto hyps_a = flat_sentences(parse_documents_file(hyp_a_path));
  const auto hyps_b = flat_sentences(parse_documents_file(hyp_b_path));
  const auto refs = flat_sentences(parse_documents_file(ref_path));
  require_aligned(hyps_a.size(), refs.size(), hyp_a_path, ref_path);
  require_aligned(hyps_b.size(), refs.size(), hyp_b_path, ref_path);

  std::vector<double> scores_a;
  std::vector<double> scores_b;
  scores_a.reserve(refs.size());
  scores_b.reserve(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    scores_a.push_back(hyps_a[i].empty() ? 0.0 : sentence_bleu_smoothed(hyps_a[i], {refs[i]}));
    scores_b.push_back(hyps_b[i].empty() ? 0.0 : sentence_bleu_smoothed(hyps_b[i], {refs[i]}));
  }
  std::fputs(format_sign_report(sign_test(scores_a, scores_b)).c_str(), stdout);
  return 0;
}

int cmd_gate_stats(const std::string& model_path, const std::string& src_vocab_path,
                   const std::string& input_path) {
  LoadedModel<float> loaded = load_model<float>(model_path);
  check_vocab_hash(src_vocab_path, loaded.meta.src_vocab_hash, "source");
  const Vocabulary src_vocab = Vocabulary::load(src_vocab_path);
  const TokenDocuments docs = parse_documents_file(input_path);
  std::fputs(format_gate_report(gate_stats(loaded.model, src_vocab, docs)).c_str(), stdout);
  return 0;
}

// Finite-difference audit of every strategy on a two-sentence-history
// example at width-8 dimensions.
int cmd_grad_check(std::uint64_t seed) {
  constexpr double kTolerance = 1e-6;
  const Strategy strategies[] = {
      Strategy::kBaseline, Strategy::kInitEnc,  Strategy::kInitDec,         Strategy::kInitBoth,
      Strategy::kAux,      Strategy::kGatedAux, Strategy::kInitBothGatedAux};

  double worst = 0.0;
  for (Strategy s : strategies) {
    ModelConfig cfg;
    cfg.strategy.strategy = s;
    cfg.strategy.window = 2;
    cfg.strategy.emb_dim = 8;
    cfg.strategy.enc_hidden = 8;
    cfg.strategy.dec_hidden = 8;
    cfg.strategy.ctx_dim = 8;
    cfg.src_vocab = 10;
    cfg.tgt_vocab = 12;
    cfg.max_len = 16;

    TranslationModel<double> model(cfg, seed);
    TrainingExample ex;
    ex.source = {5, 7, 4, 9};
    ex.target = {Vocabulary::kBos, 6, 11, 5, Vocabulary::kEos};
    ex.window = {{8, 4, 6}, {5, 9}};
    const auto report = check_gradients(model.store(), [&](Tape<double>& tape) {
      return model.example_loss(tape, ex).loss;
    });
    std::printf("strategy %s max_rel_error %.3e worst %s\n", strategy_name(s),
                report.max_rel_error, report.worst_param.c_str());
    worst = std::max(worst, report.max_rel_error);
  }
  std::printf("max_relative_error: %.3e\ntolerance: %.0e\n", worst, kTolerance);
  return worst <= kTolerance ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Document-context neural machine translation toolkit"};
  app.require_subcommand(1);

  try {
    const std::uint64_t seed_default = default_seed();

    GenSynthArgs gen;
    gen.spec.n_docs = 100;
    gen.spec.sentences_per_doc = 4;
    gen.spec.n_topics = 2;
    gen.spec.n_ambiguous = 4;
    gen.spec.filler_vocab = 50;
    gen.spec.ambiguity_rate = 0.5;
    gen.spec.seed = seed_default;
    auto* gen_cmd = app.add_subcommand("gen-synth", "Generate a synthetic parallel corpus");
    gen_cmd->add_option("--docs", gen.spec.n_docs, "Documents to generate");
    gen_cmd->add_option("--sentences", gen.spec.sentences_per_doc, "Sentences per document");
    gen_cmd->add_option("--topics", gen.spec.n_topics, "Distinct document topics");
    gen_cmd->add_option("--ambiguous", gen.spec.n_ambiguous, "Distinct ambiguous tokens");
    gen_cmd->add_option("--filler", gen.spec.filler_vocab, "Filler vocabulary size");
    gen_cmd->add_option("--rate", gen.spec.ambiguity_rate, "Ambiguous slot probability");
    gen_cmd->add_option("--seed", gen.spec.seed, "Generator seed");
    gen_cmd->add_option("--src", gen.src_path, "Source side output path")->required();
    gen_cmd->add_option("--tgt", gen.tgt_path, "Target side output path")->required();
    gen_cmd->add_option("--key", gen.key_path, "Answer key output path")->required();

    std::string vocab_input;
    std::string vocab_output;
    std::size_t vocab_cap = 35000;
    auto* vocab_cmd = app.add_subcommand("build-vocab", "Build a frequency-capped vocabulary");
    vocab_cmd->add_option("--input", vocab_input, "One-side document text file")->required();
    vocab_cmd->add_option("--cap", vocab_cap, "Maximum vocabulary size");
    vocab_cmd->add_option("--output", vocab_output, "Vocabulary file to write")->required();

    TrainArgs train;
    std::uint64_t train_seed = 0;
    auto* train_cmd = app.add_subcommand("train", "Train a translation model");
    train_cmd->add_option("--config", train.config_path, "Run configuration file")->required();
    train_cmd->add_option("--train-src", train.train_src, "Training source documents")->required();
    train_cmd->add_option("--train-tgt", train.train_tgt, "Training target documents")->required();
    train_cmd->add_option("--dev-src", train.dev_src, "Development source documents")->required();
    train_cmd->add_option("--dev-tgt", train.dev_tgt, "Development target documents")->required();
    train_cmd->add_option("--src-vocab", train.src_vocab_path, "Source vocabulary file")->required();
    train_cmd->add_option("--tgt-vocab", train.tgt_vocab_path, "Target vocabulary file")->required();
    train_cmd->add_option("--model", train.model_path, "Model file to write")->required();
    train_cmd->add_option("--log", train.log_path, "Training log file (default: stdout)");
    auto* train_seed_opt = train_cmd->add_option("--seed", train_seed, "Override the config seed");

    TranslateArgs translate;
    auto* translate_cmd = app.add_subcommand("translate", "Translate source documents");
    translate_cmd->add_option("--model", translate.model_path, "Trained model file")->required();
    translate_cmd->add_option("--src-vocab", translate.src_vocab_path, "Source vocabulary file")->required();
    translate_cmd->add_option("--tgt-vocab", translate.tgt_vocab_path, "Target vocabulary file")->required();
    translate_cmd->add_option("--input", translate.input_path, "Source documents to translate")->required();
    translate_cmd->add_option("--output", translate.output_path, "Hypothesis documents to write")->required();
    translate_cmd->add_option("--beam", translate.beam, "Beam width (1 is greedy)");

    std::string bleu_hyp;
    std::string bleu_ref;
    bool bleu_cased = false;
    auto* bleu_cmd = app.add_subcommand("bleu", "Corpus BLEU of hypotheses against references");
    bleu_cmd->add_option("--hyp", bleu_hyp, "Hypothesis documents")->required();
    bleu_cmd->add_option("--ref", bleu_ref, "Reference documents")->required();
    bleu_cmd->add_flag("--cased", bleu_cased, "Keep case instead of lowercasing");

    std::string sign_a;
    std::string sign_b;
    std::string sign_ref;
    auto* sign_cmd = app.add_subcommand("signtest", "Sign test between two hypothesis files");
    sign_cmd->add_option("--hyp-a", sign_a, "First system's hypotheses")->required();
    sign_cmd->add_option("--hyp-b", sign_b, "Second system's hypotheses")->required();
    sign_cmd->add_option("--ref", sign_ref, "Shared references")->required();

    std::string gate_model;
    std::string gate_vocab;
    std::string gate_input;
    auto* gate_cmd = app.add_subcommand("gate-stats", "Context gate statistics over a corpus");
    gate_cmd->add_option("--model", gate_model, "Trained gated model file")->required();
    gate_cmd->add_option("--src-vocab", gate_vocab, "Source vocabulary file")->required();
    gate_cmd->add_option("--input", gate_input, "Source documents to decode")->required();

    std::uint64_t grad_seed = seed_default;
    auto* grad_cmd = app.add_subcommand("grad-check", "Finite-difference gradient audit");
    grad_cmd->add_option("--seed", grad_seed, "Model initialization seed");

    CLI11_PARSE(app, argc, argv);

    if (gen_cmd->parsed()) return cmd_gen_synth(gen);
    if (vocab_cmd->parsed()) return cmd_build_vocab(vocab_input, vocab_cap, vocab_output);
    if (train_cmd->parsed()) {
      if (train_seed_opt->count()) train.seed_flag = train_seed;
      return cmd_train(train);
    }
    if (translate_cmd->parsed()) return cmd_translate(translate);
    if (bleu_cmd->parsed()) return cmd_bleu(bleu_hyp, bleu_ref, bleu_cased);
    if (sign_cmd->parsed()) return cmd_signtest(sign_a, sign_b, sign_ref);
    if (gate_cmd->parsed()) return cmd_gate_stats(gate_model, gate_vocab, gate_input);
    if (grad_cmd->parsed()) return cmd_grad_check(grad_seed);
    return 1;
  } catch (const ctxnmt::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
