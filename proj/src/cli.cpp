#include "sevrank/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sevrank/corpus.hpp"
#include "sevrank/eval.hpp"
#include "sevrank/interpret.hpp"
#include "sevrank/io.hpp"
#include "sevrank/siamese.hpp"
#include "sevrank/synthetic.hpp"

namespace sevrank::cli {

namespace fs = std::filesystem;

namespace {

struct CorpusArgs {
  std::string manifest;
  std::string scripts;
  std::string aspect;
  std::int64_t min_votes = 5;
};

struct ModelArgs {
  std::string arch = "rnn_trans";
  std::string embeddings = "hash:64";
  int hidden = 200;
  int layers = 1;
  int projection = 200;
  int channels = 10;
  std::vector<int> kernels = {3, 4, 5};
  double dropout = 0.0;
  bool multitask = true;
  double lr = 0.001;
  int batch_size = 16;
  int pairs_per_epoch = 0;
  int max_epochs = 30;
  int patience = 5;
  double rank_weight = 1.0;
  std::size_t max_utterances = 2000;
  std::size_t max_tokens = 128;
};

void add_corpus_options(CLI::App* cmd, CorpusArgs& a, bool need_aspect) {
  cmd->add_option("--manifest", a.manifest, "Tab-separated label manifest")->required();
  cmd->add_option("--scripts", a.scripts, "Directory of <movie_id>.txt scripts")->required();
  auto* opt = cmd->add_option("--aspect", a.aspect, "sex|violence|profanity|substance|frightening");
  if (need_aspect) opt->required();
  cmd->add_option("--min-votes", a.min_votes, "Drop instances with fewer votes")->capture_default_str();
}

void add_model_options(CLI::App* cmd, ModelArgs& m) {
  cmd->add_option("--arch", m.arch, "rnn_trans|textrcnn|textcnn|avg_embed")->capture_default_str();
  cmd->add_option("--embeddings", m.embeddings,
                  "Provider: hash:<dim> | hashword:<dim> | glove:<dim>:<path> | "
                  "precomputed:<dim>:<tag>:<dir>")
      ->capture_default_str();
  cmd->add_option("--hidden", m.hidden, "Recurrent hidden size per direction")->capture_default_str();
  cmd->add_option("--layers", m.layers, "Stacked Bi-LSTM layers (rnn_trans)")->capture_default_str();
  cmd->add_option("--projection", m.projection, "TextRCNN projection width")->capture_default_str();
  cmd->add_option("--channels", m.channels, "TextCNN channels per kernel")->capture_default_str();
  cmd->add_option("--kernels", m.kernels, "TextCNN kernel widths")->delimiter(',');
  cmd->add_option("--dropout", m.dropout, "Dropout on the representation")->capture_default_str();
  cmd->add_flag("--multitask,!--no-multitask", m.multitask, "Joint ranking-classification training");
  cmd->add_option("--lr", m.lr, "Learning rate")->capture_default_str();
  cmd->add_option("--batch-size", m.batch_size, "Pairs per optimizer step")->capture_default_str();
  cmd->add_option("--pairs-per-epoch", m.pairs_per_epoch, "0 = ceil(N/2)")->capture_default_str();
  cmd->add_option("--max-epochs", m.max_epochs, "Epoch limit")->capture_default_str();
  cmd->add_option("--patience", m.patience, "Early-stopping patience")->capture_default_str();
  cmd->add_option("--rank-weight", m.rank_weight, "Weight of the ranking loss")->capture_default_str();
  cmd->add_option("--max-utterances", m.max_utterances, "Utterances kept per document")->capture_default_str();
  cmd->add_option("--max-tokens", m.max_tokens, "Tokens kept per utterance")->capture_default_str();
}

Aspect require_aspect(const std::string& name) {
  auto a = parse_aspect(name);
  if (!a) throw ArgumentError("unknown aspect '" + name + "'");
  return *a;
}

ProviderPtr open_provider(const std::string& spec) {
  ProviderPtr p;
  const char* cache = std::getenv(kCacheEnv);
  if (cache && *cache && spec.rfind("precomputed:", 0) == 0) {
    // The cache directory from the environment replaces the one in the spec.
    const auto parts = io::split(spec, ':');
    if (parts.size() < 4) throw ArgumentError("bad provider spec '" + spec + "'");
    p = std::make_shared<PrecomputedSentenceProvider>(cache, std::stoi(parts[1]), parts[2]);
  } else {
    p = make_provider(spec);
  }
  if (cache && *cache && p->kind() == EmbeddingKind::Sentence && spec.rfind("precomputed:", 0) != 0) {
    p = std::make_shared<CachedProvider>(p, cache);
  }
  return p;
}

AspectDataset load_aspect(const CorpusArgs& a, Aspect aspect) {
  Corpus corpus = load_corpus(a.manifest, a.scripts);
  return filter_by_votes(corpus.at(aspect), a.min_votes);
}

AspectDataset with_split(const AspectDataset& ds, const std::string& split_path) {
  return apply_split(ds, read_split(split_path));
}

const LabeledInstance& find_instance(const AspectDataset& ds, const std::string& id) {
  for (const auto& inst : ds.instances)
    if (inst.movie_id() == id) return inst;
  throw DataError("movie '" + id + "' not found in the " + std::string(aspect_name(ds.aspect)) +
                  " dataset");
}

BackboneConfig backbone_from(const ModelArgs& m, int input_dim) {
  BackboneConfig b;
  auto arch = parse_architecture(m.arch);
  if (!arch) throw ArgumentError("unknown architecture '" + m.arch + "'");
  b.architecture = *arch;
  b.input_dim = input_dim;
  b.hidden_dim = m.hidden;
  b.rnn_layers = m.layers;
  b.projection_dim = m.projection;
  b.channels = m.channels;
  b.kernel_sizes = m.kernels;
  b.dropout = m.dropout;
  b.validate();
  return b;
}

TrainConfig train_config_from(const ModelArgs& m, std::uint64_t seed) {
  TrainConfig t;
  t.learning_rate = m.lr;
  t.batch_size = m.batch_size;
  t.pairs_per_epoch = m.pairs_per_epoch;
  t.max_epochs = m.max_epochs;
  t.patience = m.patience;
  t.rank_weight = m.rank_weight;
  t.seed = seed;
  t.validate();
  return t;
}

void write_pair(const std::string& prefix, const std::string& text, const std::string& json) {
  io::write_file_atomic(prefix + ".txt", text);
  io::write_file_atomic(prefix + ".json", json);
}

bool given_on_command_line(CLI::App* cmd, const CLI::Option* opt, const std::vector<std::string>& args) {
  for (const auto& a : args) {
    if (a.rfind("--", 0) != 0) continue;
    if (cmd->get_option_no_throw(a.substr(0, a.find('='))) == opt) return true;
  }
  return false;
}

// Config entries become --key=value arguments unless the same option was given as a flag.
std::vector<std::string> merge_config(CLI::App& app, std::vector<std::string> args) {
  if (args.empty()) return args;
  CLI::App* cmd = app.get_subcommand_no_throw(args.front());
  if (cmd == nullptr) return args;
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  if (!fs::exists(path)) throw CLI::FileError::Missing(path);
  const CLI::Option* config_opt = cmd->get_option_no_throw("--config");
  std::vector<std::string> extra;
  for (const auto& item : CLI::ConfigINI().from_file(path)) {
    if (!item.parents.empty() && !(item.parents.size() == 1 && item.parents.front() == cmd->get_name())) continue;
    std::string key = item.name;
    std::replace(key.begin(), key.end(), '_', '-');
    const CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (opt == nullptr || opt == config_opt || given_on_command_line(cmd, opt, args)) continue;
    std::string value;
    for (const auto& v : item.inputs) value += (value.empty() ? "" : ",") + v;
    extra.push_back("--" + key + "=" + value);
  }
  args.insert(args.begin() + 1, extra.begin(), extra.end());
  return args;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Ordinal severity prediction for movie dialogue scripts"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;

  auto configurable = [&](CLI::App* cmd) {
    cmd->add_option("--config", "key=value file; command-line flags take precedence");
    cmd->add_option("--seed", seed, "Seed for every random choice")->capture_default_str();
  };

  // prepare
  CorpusArgs prep;
  std::string prep_out, prep_splits;
  double train_ratio = 0.8, dev_ratio = 0.1, test_ratio = 0.1;
  auto* prepare = app.add_subcommand("prepare", "Filter, split and summarize every aspect");
  configurable(prepare);
  add_corpus_options(prepare, prep, false);
  prepare->add_option("--out", prep_out, "Output directory")->required();
  prepare->add_option("--splits", prep_splits,
                      "Directory of released <aspect>.split.tsv files, loaded verbatim when present");
  prepare->add_option("--train-ratio", train_ratio)->capture_default_str();
  prepare->add_option("--dev-ratio", dev_ratio)->capture_default_str();
  prepare->add_option("--test-ratio", test_ratio)->capture_default_str();

  // stats
  CorpusArgs st;
  bool stats_json = false;
  auto* stats = app.add_subcommand("stats", "Corpus statistics for one aspect");
  configurable(stats);
  add_corpus_options(stats, st, true);
  stats->add_flag("--json", stats_json, "Print JSON instead of text");

  // train
  CorpusArgs tr;
  ModelArgs tm;
  std::string train_split, train_model, train_log;
  auto* trainc = app.add_subcommand("train", "Train a model for one aspect");
  configurable(trainc);
  add_corpus_options(trainc, tr, true);
  add_model_options(trainc, tm);
  trainc->add_option("--split", train_split, "Split file from prepare")->required();
  trainc->add_option("--model", train_model, "Output model file")->required();
  trainc->add_option("--log", train_log, "Metrics log (default <model>.log)");

  // eval
  CorpusArgs ev;
  std::string eval_model, eval_split, eval_part = "test", eval_out;
  auto* evalc = app.add_subcommand("eval", "Macro-F1 and confusion on a split part");
  configurable(evalc);
  add_corpus_options(evalc, ev, false);
  evalc->add_option("--model", eval_model)->required();
  evalc->add_option("--split", eval_split)->required();
  evalc->add_option("--part", eval_part, "train|dev|test")->capture_default_str();
  evalc->add_option("--out", eval_out, "Write <out>.txt and <out>.json");

  // crossval
  CorpusArgs cv;
  ModelArgs cm;
  int folds = 10;
  std::string cv_out;
  auto* crossval = app.add_subcommand("crossval", "Stratified k-fold cross-validation");
  configurable(crossval);
  add_corpus_options(crossval, cv, true);
  add_model_options(crossval, cm);
  crossval->add_option("--k", folds)->capture_default_str();
  crossval->add_option("--out", cv_out, "TSV of per-fold macro-F1")->required();

  // compare
  CorpusArgs cp;
  std::string cmp_model, cmp_a, cmp_b;
  bool cmp_json = false;
  auto* comparec = app.add_subcommand("compare", "Pairwise severity comparison of two movies");
  configurable(comparec);
  add_corpus_options(comparec, cp, false);
  comparec->add_option("--model", cmp_model)->required();
  comparec->add_option("--a", cmp_a, "Left movie_id")->required();
  comparec->add_option("--b", cmp_b, "Right movie_id")->required();
  comparec->add_flag("--json", cmp_json);

  // report
  CorpusArgs rp;
  std::string rep_model, rep_split, rep_pop, rep_movie, rep_out, rep_pool = "train,dev";
  std::int64_t min_pop = 200000;
  std::size_t per_level = 5;
  auto* reportc = app.add_subcommand("report", "Comparator-based interpretability report");
  configurable(reportc);
  add_corpus_options(reportc, rp, false);
  reportc->add_option("--model", rep_model)->required();
  reportc->add_option("--split", rep_split)->required();
  reportc->add_option("--popularity", rep_pop, "TSV movie_id<TAB>rating_count")->required();
  reportc->add_option("--movie", rep_movie, "Movie to explain")->required();
  reportc->add_option("--pool", rep_pool, "Comparator pool: train,dev,test or all")->capture_default_str();
  reportc->add_option("--min-popularity", min_pop)->capture_default_str();
  reportc->add_option("--per-level", per_level)->capture_default_str();
  reportc->add_option("--out", rep_out, "Write <out>.txt and <out>.json");

  // synth
  SyntheticConfig syn;
  std::string syn_out, syn_aspect = "profanity";
  auto* synth = app.add_subcommand("synth", "Write a planted-signal synthetic corpus");
  configurable(synth);
  synth->add_option("--out", syn_out, "Output directory")->required();
  synth->add_option("--documents", syn.documents)->capture_default_str();
  synth->add_option("--min-utterances", syn.min_utterances)->capture_default_str();
  synth->add_option("--max-utterances", syn.max_utterances)->capture_default_str();
  synth->add_option("--filler-vocabulary", syn.filler_vocabulary)->capture_default_str();
  synth->add_flag("--scene,!--scatter", syn.scene, "Marker utterances as one contiguous scene (default)");
  synth->add_option("--aspect", syn_aspect)->capture_default_str();

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = merge_config(app, std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*prepare) {
      Corpus corpus = load_corpus(prep.manifest, prep.scripts);
      const SplitRatios ratios{train_ratio, dev_ratio, test_ratio};
      std::vector<Aspect> aspects(kAllAspects.begin(), kAllAspects.end());
      if (!prep.aspect.empty()) aspects = {require_aspect(prep.aspect)};
      // Everything is computed before the first write.
      std::vector<std::pair<fs::path, std::string>> files;
      nlohmann::json summary;
      summary["seed"] = seed;
      summary["min_votes"] = prep.min_votes;
      summary["ratios"] = {train_ratio, dev_ratio, test_ratio};
      summary["splits"] = prep_splits;
      summary["aspect"] = prep.aspect;
      summary["config_hash"] = io::hex64(fnv1a64(summary.dump()));
      for (Aspect a : aspects) {
        const std::string name(aspect_name(a));
        AspectDataset ds = filter_by_votes(corpus.at(a), prep.min_votes);
        if (ds.empty()) {
          summary["aspects"][name] = {{"instances", 0}};
          continue;
        }
        const fs::path released = prep_splits.empty() ? fs::path() : fs::path(prep_splits) / (name + ".split.tsv");
        if (!released.empty() && fs::exists(released)) {
          ds = apply_split(ds, read_split(released));
        } else {
          ds = stratified_split(ds, ratios, derive_seed(seed, "split:" + name));
        }
        std::ostringstream split_text, instances;
        std::array<std::size_t, 3> sizes{};
        for (const auto& inst : ds.instances) {
          const SplitPart part = ds.split->at(inst.movie_id());
          ++sizes[static_cast<int>(part)];
          split_text << inst.movie_id() << '\t' << split_part_name(part) << '\n';
          instances << inst.movie_id() << '\t' << severity_name(inst.label) << '\t' << inst.votes << '\n';
        }
        const CorpusStats cs = corpus_stats(ds);
        files.emplace_back(fs::path(prep_out) / (name + ".split.tsv"), split_text.str());
        files.emplace_back(fs::path(prep_out) / (name + ".instances.tsv"), instances.str());
        files.emplace_back(fs::path(prep_out) / (name + ".stats.txt"), cs.to_text());
        files.emplace_back(fs::path(prep_out) / (name + ".stats.json"), cs.to_json());
        summary["aspects"][name] = {{"instances", ds.size()},
                                    {"train", sizes[0]},
                                    {"dev", sizes[1]},
                                    {"test", sizes[2]}};
        out << name << ": " << ds.size() << " instances (train " << sizes[0] << ", dev " << sizes[1]
            << ", test " << sizes[2] << ")\n";
      }
      files.emplace_back(fs::path(prep_out) / "prepare.json", summary.dump(2) + "\n");
      for (const auto& [path, content] : files) io::write_file_atomic(path, content);
      return kOk;
    }

    if (*stats) {
      const CorpusStats cs = corpus_stats(load_aspect(st, require_aspect(st.aspect)));
      out << (stats_json ? cs.to_json() : cs.to_text());
      return kOk;
    }

    if (*trainc) {
      const Aspect aspect = require_aspect(tr.aspect);
      InputCache inputs(open_provider(tm.embeddings), DocumentCaps{tm.max_utterances, tm.max_tokens});
      const BackboneConfig backbone = backbone_from(tm, inputs.provider().dim());
      const TrainConfig config = train_config_from(tm, seed);
      const AspectDataset ds = with_split(load_aspect(tr, aspect), train_split);
      std::ostringstream log;
      SiameseModel model = train(config, ds, backbone, inputs, tm.multitask, &log);
      model.save(train_model);
      io::write_file_atomic(train_log.empty() ? train_model + ".log" : train_log, log.str());
      out << "best dev macro_f1 " << model.info().best_dev_macro_f1 << " at epoch "
          << model.info().best_epoch << "; config_hash " << model.info().config_hash() << '\n';
      return kOk;
    }

    if (*evalc) {
      SiameseModel model = SiameseModel::load(eval_model);
      const Aspect aspect = ev.aspect.empty() ? model.info().aspect : require_aspect(ev.aspect);
      if (aspect != model.info().aspect) {
        throw DataError("model aspect '" + std::string(aspect_name(model.info().aspect)) +
                        "' does not match requested aspect '" + ev.aspect + "'");
      }
      auto part = parse_split_part(eval_part);
      if (!part) throw ArgumentError("unknown split part '" + eval_part + "'");
      InputCache inputs(open_provider(model.info().provider_spec), model.info().caps);
      const AspectDataset ds = with_split(load_aspect(ev, aspect), eval_split).part(*part);
      const EvalReport report = evaluate(model, inputs, ds);
      out << report.to_text();
      if (!eval_out.empty()) write_pair(eval_out, report.to_text(), report.to_json());
      return kOk;
    }

    if (*crossval) {
      const Aspect aspect = require_aspect(cv.aspect);
      InputCache inputs(open_provider(cm.embeddings), DocumentCaps{cm.max_utterances, cm.max_tokens});
      const BackboneConfig backbone = backbone_from(cm, inputs.provider().dim());
      const TrainConfig config = train_config_from(cm, seed);
      const AspectDataset ds = load_aspect(cv, aspect);
      CrossValidationOptions opts;
      opts.k = folds;
      opts.seed = seed;
      const CVReport report = cross_validate(config, backbone, ds, inputs, cm.multitask, opts);
      io::write_file_atomic(cv_out, report.to_tsv());
      out << "mean macro_f1 " << report.mean << " (std " << report.stddev << ") over " << folds
          << " folds; config_hash " << report.config_hash << '\n';
      return kOk;
    }

    if (*comparec) {
      SiameseModel model = SiameseModel::load(cmp_model);
      if (!model.multitask()) {
        throw UnsupportedOperation("model was trained for classification only; compare needs the ranking head");
      }
      InputCache inputs(open_provider(model.info().provider_spec), model.info().caps);
      Corpus corpus = load_corpus(cp.manifest, cp.scripts);
      const AspectDataset& ds = corpus.at(model.info().aspect);
      const auto& a = find_instance(ds, cmp_a);
      const auto& b = find_instance(ds, cmp_b);
      const Comparison c = compare(model, inputs, *a.document, *b.document);
      if (cmp_json) {
        nlohmann::json j = {{"a", cmp_a},
                            {"b", cmp_b},
                            {"aspect", aspect_name(model.info().aspect)},
                            {"outcome", rank_name(c.label)},
                            {"probabilities", c.probabilities},
                            {"config_hash", model.info().config_hash()}};
        out << j.dump(2) << '\n';
      } else {
        out << cmp_a << ' ' << rank_glyph(c.label) << ' ' << cmp_b << "  " << rank_name(c.label)
            << "  (lower " << c.probabilities[0] << ", equal " << c.probabilities[1] << ", higher "
            << c.probabilities[2] << ")\n";
      }
      return kOk;
    }

    if (*reportc) {
      SiameseModel model = SiameseModel::load(rep_model);
      const Aspect aspect = model.info().aspect;
      if (!rp.aspect.empty() && require_aspect(rp.aspect) != aspect) {
        throw DataError("model aspect does not match requested aspect '" + rp.aspect + "'");
      }
      InputCache inputs(open_provider(model.info().provider_spec), model.info().caps);
      const AspectDataset ds = with_split(load_aspect(rp, aspect), rep_split);
      ComparatorOptions opts;
      opts.min_popularity = min_pop;
      opts.per_level = per_level;
      opts.exclude_movie = rep_movie;
      opts.pool.clear();
      if (rep_pool != "all") {
        for (const auto& p : io::split(rep_pool, ',')) {
          auto part = parse_split_part(io::trim(p));
          if (!part) throw ArgumentError("unknown pool part '" + p + "'");
          opts.pool.insert(*part);
        }
      }
      const ComparatorSet set = select_comparators(ds, read_popularity(rep_pop), opts);
      for (const auto& w : set.warnings) err << "warning: " << w << '\n';
      const auto& movie = find_instance(ds, rep_movie);
      const ComparatorReport report = comparator_report(model, inputs, *movie.document, set, movie.label);
      out << report.to_text();
      if (!rep_out.empty()) write_pair(rep_out, report.to_text(), report.to_json());
      return kOk;
    }

    if (*synth) {
      syn.aspect = require_aspect(syn_aspect);
      syn.seed = seed;
      const SyntheticCorpus sc = make_synthetic_corpus(syn);
      Corpus corpus;
      corpus[syn.aspect] = sc.dataset;
      write_corpus(corpus, fs::path(syn_out) / "manifest.tsv", fs::path(syn_out) / "scripts");
      std::ostringstream pop;
      for (const auto& [id, n] : sc.popularity) pop << id << '\t' << n << '\n';
      io::write_file_atomic(fs::path(syn_out) / "popularity.tsv", pop.str());
      out << "wrote " << sc.dataset.size() << " documents to " << syn_out << '\n';
      return kOk;
    }
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const TrainingError& e) {
    err << "training error: " << e.what() << '\n';
    return kTrainingError;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

}  // namespace sevrank::cli
