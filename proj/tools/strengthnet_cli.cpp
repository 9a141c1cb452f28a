// strengthnet: command-line driver for the emotion-strength workflow.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "strengthnet/audio/features.hpp"
#include "strengthnet/common/binary_io.hpp"
#include "strengthnet/common/error.hpp"
#include "strengthnet/eval/report.hpp"
#include "strengthnet/model/checkpoint.hpp"
#include "strengthnet/pipeline/config.hpp"
#include "strengthnet/pipeline/feature_cache.hpp"
#include "strengthnet/pipeline/ground_truth.hpp"
#include "strengthnet/pipeline/manifest.hpp"
#include "strengthnet/pipeline/split.hpp"
#include "strengthnet/pipeline/workflow.hpp"
#include "strengthnet/rank/ranker.hpp"
#include "strengthnet/synth/generator.hpp"

namespace fs = std::filesystem;
namespace sn = strengthnet;

namespace {

struct ExtractArgs {
  std::string manifest, out, norm_stats, feature_set = "full";
};

void run_extract(const ExtractArgs& a) {
  const auto manifest = sn::read_manifest(a.manifest);
  const auto set = a.feature_set == "reduced" ? sn::audio::FeatureSet::kReduced : sn::audio::FeatureSet::kFull;
  const auto features = sn::pipeline::compute_features(manifest, set);
  sn::pipeline::save_features(a.out, features);
  if (!a.norm_stats.empty()) {
    sn::audio::save_norm_stats(a.norm_stats, sn::pipeline::fit_norm_stats(features.mels, manifest));
  }
  std::printf("extracted %zu utterances into %s\n", manifest.size(), a.out.c_str());
}

struct RankerArgs {
  std::string manifest, features, emotion, dataset, out;
  double C = 1.0;
  std::uint64_t seed = 0;
};

void run_train_ranker(const RankerArgs& a) {
  const auto manifest = sn::read_manifest(a.manifest);
  sn::CorpusManifest subset;
  subset.base_dir = manifest.base_dir;
  for (const auto& r : manifest.records) {
    if (r.dataset_id == a.dataset) subset.records.push_back(r);
  }
  const auto features = sn::pipeline::load_functionals(subset, a.features);
  const auto pairs = sn::rank::build_pair_sets(subset, features, a.emotion, a.dataset, {},
                                               sn::mix_seed({a.seed, sn::stable_hash(a.dataset),
                                                             sn::stable_hash(a.emotion)}));
  sn::rank::RankerOptions opt;
  opt.C = a.C;
  const auto fit = sn::rank::train_ranker(pairs, opt);
  sn::rank::save_ranking_model(a.out, fit.model);
  std::printf("ranker %s/%s: %zu ordered, %zu similar pairs, %d iterations%s\n", a.dataset.c_str(),
              a.emotion.c_str(), pairs.ordered.size(), pairs.similar.size(), fit.iterations,
              fit.converged ? "" : " (not converged)");
}

struct DeriveArgs {
  std::string manifest, rankers, features, out;
};

void run_derive(const DeriveArgs& a) {
  const auto manifest = sn::read_manifest(a.manifest);
  const auto features_dir = a.features.empty() ? fs::path(a.manifest).parent_path() / "features" : fs::path(a.features);
  const auto features = sn::pipeline::load_functionals(manifest, features_dir);
  const auto rankers = sn::pipeline::load_rankers(a.rankers);
  const auto labelled = sn::pipeline::derive_ground_truth(manifest, features, rankers);
  sn::write_manifest(a.out, labelled);
  std::printf("derived strengths for %zu utterances\n", labelled.size());
}

struct TrainArgs {
  std::string train, val, features, config, out, log;
  std::optional<std::uint64_t> seed;
};

void run_train(const TrainArgs& a) {
  auto cfg = a.config.empty() ? sn::pipeline::RunConfig{} : sn::pipeline::load_run_config(a.config);
  if (a.seed) cfg.training.seed = *a.seed;
  const auto train = sn::read_manifest(a.train);
  const auto val = sn::read_manifest(a.val);
  auto mels = sn::pipeline::load_mels(train, a.features);
  mels.merge(sn::pipeline::load_mels(val, a.features));

  if (!fs::path(a.log).parent_path().empty()) fs::create_directories(fs::path(a.log).parent_path());
  std::ofstream log(a.log, std::ios::binary | std::ios::trunc);
  if (!log) sn::fail(sn::ErrorCode::kIoError, "cannot write " + a.log);
  const auto trained = sn::pipeline::train_model(cfg, train, val, mels, [&](const sn::pipeline::EpochRecord& r) {
    log << sn::pipeline::to_json_line(r) << '\n';
    log.flush();
  });
  sn::model::save_checkpoint(a.out, trained.checkpoint.params, trained.checkpoint.config,
                             trained.checkpoint.norm_stats);
  std::printf("trained %zu epochs; best epoch %zu with validation MAE %.6f\n", trained.fit.epochs_run,
              trained.fit.best_epoch, trained.fit.best_val_mae);
}

struct InferArgs {
  std::string checkpoint, manifest, features, out;
};

void run_infer(const InferArgs& a) {
  const auto ck = sn::model::load_checkpoint(a.checkpoint);
  const auto manifest = sn::read_manifest(a.manifest);
  const auto mels = sn::pipeline::load_mels(manifest, a.features);
  const auto rows = sn::pipeline::infer(ck, manifest, mels);
  sn::io::write_file(a.out, sn::eval::format_predictions(rows));
  std::printf("scored %zu utterances\n", rows.size());
}

struct EvaluateArgs {
  std::string pred, truth, out, categories;
  std::size_t bins = 20;
};

void run_evaluate(const EvaluateArgs& a) {
  const auto predictions = sn::eval::parse_predictions(sn::io::read_file(a.pred));
  const auto truth = sn::read_manifest(a.truth);
  std::map<std::string, double> categories;
  if (!a.categories.empty()) {
    for (const auto& t : sn::synth::parse_truth(sn::io::read_file(a.categories))) {
      categories[t.utterance_id] = t.strength_param;
    }
  }
  const auto rows =
      sn::pipeline::join_for_evaluation(predictions, truth, a.categories.empty() ? nullptr : &categories);
  const auto report = sn::eval::build_report(rows, a.bins);
  sn::io::write_file(a.out, sn::eval::to_json(report).dump(2) + "\n");
  const fs::path out(a.out);
  const auto stem = out.parent_path() / out.stem();
  sn::io::write_file(stem.string() + ".histogram.tsv", sn::eval::histogram_tsv(report.overall.histogram));
  sn::io::write_file(stem.string() + ".confusion.tsv", sn::eval::confusion_tsv(report.overall.confusion));
  std::printf("mae %.6f  ser_accuracy %.6f  over %zu utterances\n", report.overall.mae, report.overall.ser_accuracy,
              report.overall.count);
}

struct SynthArgs {
  std::string spec, out;
};

void run_synth(const SynthArgs& a) {
  const auto spec = sn::synth::parse_synth_spec(sn::io::read_file(a.spec));
  const auto corpus = sn::synth::generate_corpus(spec, a.out);
  std::printf("generated %zu utterances in %s\n", corpus.manifest.size(), a.out.c_str());
}

struct SplitArgs {
  std::string manifest, out, ratio = "8:1:1";
  std::uint64_t seed = 0;
};

void run_split(const SplitArgs& a) {
  sn::pipeline::TrainingConfig tc;
  sn::pipeline::set_field(tc, "split_ratio", a.ratio);
  const auto manifest = sn::read_manifest(a.manifest);
  const auto splits = sn::pipeline::split_corpus(manifest, tc.split_ratio, a.seed);
  const fs::path dir(a.out);
  sn::write_manifest(dir / "train.tsv", splits.train);
  sn::write_manifest(dir / "val.tsv", splits.val);
  sn::write_manifest(dir / "test.tsv", splits.test);
  std::printf("split %zu / %zu / %zu\n", splits.train.size(), splits.val.size(), splits.test.size());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emotion strength estimation: features, rankers, StrengthNet training and evaluation"};
  app.require_subcommand(1);

  ExtractArgs extract;
  auto* c_extract = app.add_subcommand("extract-features", "Compute log-mel spectrograms and functionals");
  c_extract->add_option("--manifest", extract.manifest, "Corpus manifest TSV")->required();
  c_extract->add_option("--out", extract.out, "Feature directory")->required();
  c_extract->add_option("--norm-stats", extract.norm_stats, "Write per-channel mel statistics here");
  c_extract->add_option("--feature-set", extract.feature_set, "full or reduced")
      ->check(CLI::IsMember({"full", "reduced"}));

  RankerArgs ranker;
  auto* c_ranker = app.add_subcommand("train-ranker", "Fit a relative-attributes ranking function");
  c_ranker->add_option("--manifest", ranker.manifest)->required();
  c_ranker->add_option("--features", ranker.features)->required();
  c_ranker->add_option("--emotion", ranker.emotion, "Emotion label, or 'all' for a pooled ranker")->required();
  c_ranker->add_option("--dataset", ranker.dataset)->required();
  c_ranker->add_option("--out", ranker.out)->required();
  c_ranker->add_option("--C", ranker.C, "Slack weight");
  c_ranker->add_option("--seed", ranker.seed);

  DeriveArgs derive;
  auto* c_derive = app.add_subcommand("derive-strength", "Fill the strength column from trained rankers");
  c_derive->add_option("--manifest", derive.manifest)->required();
  c_derive->add_option("--rankers", derive.rankers, "Directory of .rank files")->required();
  c_derive->add_option("--features", derive.features, "Feature directory (default: <manifest dir>/features)");
  c_derive->add_option("--out", derive.out)->required();

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train StrengthNet");
  c_train->add_option("--train", train.train)->required();
  c_train->add_option("--val", train.val)->required();
  c_train->add_option("--features", train.features)->required();
  c_train->add_option("--config", train.config, "key=value configuration file");
  c_train->add_option("--out", train.out)->required();
  c_train->add_option("--log", train.log)->required();
  c_train->add_option("--seed", train.seed, "Overrides the config seed");

  InferArgs infer;
  auto* c_infer = app.add_subcommand("infer", "Score a manifest with a frozen checkpoint");
  c_infer->add_option("--checkpoint", infer.checkpoint)->required();
  c_infer->add_option("--manifest", infer.manifest)->required();
  c_infer->add_option("--features", infer.features)->required();
  c_infer->add_option("--out", infer.out)->required();

  EvaluateArgs evaluate;
  auto* c_eval = app.add_subcommand("evaluate", "Compare predictions with reference strengths");
  c_eval->add_option("--pred", evaluate.pred)->required();
  c_eval->add_option("--truth", evaluate.truth, "Manifest with reference strengths")->required();
  c_eval->add_option("--out", evaluate.out)->required();
  c_eval->add_option("--categories", evaluate.categories,
                     "Generator truth TSV; its strength_param sets the normal/strong reference");
  c_eval->add_option("--bins", evaluate.bins)->check(CLI::PositiveNumber);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  c_synth->add_option("--spec", synth.spec, "JSON generator spec")->required();
  c_synth->add_option("--out", synth.out)->required();

  SplitArgs split;
  auto* c_split = app.add_subcommand("split", "Stratified train/val/test split");
  c_split->add_option("--manifest", split.manifest)->required();
  c_split->add_option("--out", split.out)->required();
  c_split->add_option("--ratio", split.ratio);
  c_split->add_option("--seed", split.seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_extract) run_extract(extract);
    if (*c_ranker) run_train_ranker(ranker);
    if (*c_derive) run_derive(derive);
    if (*c_train) run_train(train);
    if (*c_infer) run_infer(infer);
    if (*c_eval) run_evaluate(evaluate);
    if (*c_synth) run_synth(synth);
    if (*c_split) run_split(split);
  } catch (const sn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
