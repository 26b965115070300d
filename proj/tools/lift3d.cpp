#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "lift3d/checkpoint.hpp"
#include "lift3d/dataset.hpp"
#include "lift3d/errors.hpp"
#include "lift3d/metrics.hpp"
#include "lift3d/pointcloud.hpp"
#include "lift3d/trainer.hpp"

namespace {

using namespace lift3d;

// Exit-code contract: 0 ok, 2 config/input error, 3 numeric failure, 4 I/O.
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

struct SynthArgs {
  std::string out;
  HingeChainConfig chain;
};

int run_synth(const SynthArgs& args) {
  const Dataset ds = synth_hinge_chain(args.chain);
  write_dataset(args.out, ds);
  std::printf("wrote %s: %zu frames, K=%zu, occlusion rate %.4f\n", args.out.c_str(),
              ds.samples.size(), ds.manifest.keypoints, occlusion_rate(ds));
  return 0;
}

struct TrainArgs {
  std::string dataset_path;
  std::string out_dir;
  std::string resume;
  std::string family = "mixer";
  std::size_t depth = 8;
  std::size_t width = 8;
  std::string scale_mode = "auto";
  std::vector<std::size_t> sizes_random;
  std::vector<std::size_t> sizes_nn = {32};
  std::size_t subsets_per_batch = 10;
  double epsilon = 1e-8;
  bool no_occlusion = false;
  TrainConfig train;
};

int run_train(TrainArgs& args, bool lr_given, bool steps_given) {
  // Sequence mode defaults to a long low-rate schedule unless overridden.
  if (args.train.sequence_mode) {
    if (!lr_given) args.train.learning_rate = 1e-5;
    if (!steps_given) args.train.steps = 200000;
  }
  const Dataset ds = read_dataset(args.dataset_path);

  SubsetLossConfig loss_cfg;
  loss_cfg.sizes_random = args.sizes_random;
  loss_cfg.sizes_nn = args.sizes_nn;
  loss_cfg.subsets_per_batch = args.subsets_per_batch;
  loss_cfg.epsilon = args.epsilon;
  if (args.scale_mode == "auto") {
    loss_cfg.scale_mode = ds.manifest.camera.kind == CameraKind::kPerspective
                              ? ScaleMode::kPerspectiveMeanDepth
                              : ScaleMode::kOrthographicStd;
  } else if (args.scale_mode == "std") {
    loss_cfg.scale_mode = ScaleMode::kOrthographicStd;
  } else if (args.scale_mode == "mean-depth") {
    loss_cfg.scale_mode = ScaleMode::kPerspectiveMeanDepth;
  } else {
    throw InvalidInputError("unknown scale mode: " + args.scale_mode);
  }

  std::filesystem::create_directories(args.out_dir);
  args.train.occlusion_enabled = !args.no_occlusion;
  args.train.checkpoint_path = args.out_dir + "/checkpoint.l3ck";
  args.train.metrics_path = args.out_dir + "/metrics.csv";

  TrainResult result;
  if (!args.resume.empty()) {
    LoadedCheckpoint loaded = load_checkpoint(args.resume);
    if (!loaded.adam || !loaded.state)
      throw InvalidInputError("resume checkpoint carries no optimizer state: " + args.resume);
    result = continue_training(*loaded.model, *loaded.adam, *loaded.state, ds, loss_cfg,
                               args.train);
    // keep the resumed model's checkpoint on disk under the new out-dir
    save_checkpoint(args.train.checkpoint_path, *loaded.model, loaded.adam.get(),
                    &result.state);
  } else {
    ModelConfig model_cfg;
    model_cfg.family = family_from_name(args.family);
    model_cfg.depth = args.depth;
    model_cfg.width = args.width;
    model_cfg.keypoints = ds.manifest.keypoints;
    model_cfg.seed = args.train.seed;
    auto model = build_model(model_cfg);
    std::printf("training %s(depth=%zu,width=%zu), %zu parameters, %zu steps\n",
                args.family.c_str(), args.depth, args.width,
                model->params().parameter_count(), args.train.steps);
    result = train_model(*model, ds, loss_cfg, args.train);
  }

  if (!result.history.empty()) {
    const StepMetrics& last = result.history.back();
    std::printf("done: step %llu subset_loss %.6f occlusion_loss %.6f cosine %.4f\n",
                static_cast<unsigned long long>(last.step), last.subset_loss,
                last.occlusion_loss, last.unclamped_cosine);
  }
  std::printf("checkpoint: %s\nmetrics: %s\n", args.train.checkpoint_path.c_str(),
              args.train.metrics_path.c_str());
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string dataset_path;
  std::string report_path;
  bool seq_scale = false;
  bool gt_as_prediction = false;
  std::size_t chunk = 512;
};

int run_eval(const EvalArgs& args) {
  const Dataset ds = read_dataset(args.dataset_path);
  LoadedCheckpoint loaded = load_checkpoint(args.checkpoint);
  if (loaded.model->config().keypoints != ds.manifest.keypoints)
    throw InvalidInputError("checkpoint and dataset keypoint counts differ");

  EvalOptions options;
  options.sequence_scale =
      args.seq_scale || ds.manifest.camera.kind == CameraKind::kPerspective;
  options.use_gt_as_prediction = args.gt_as_prediction;
  options.chunk = args.chunk;
  const EvalReport report = evaluate_model(*loaded.model, ds, options);
  if (!args.report_path.empty()) write_report(args.report_path, report);

  std::printf("samples %zu K %zu camera %s\n", report.samples, report.keypoints,
              report.camera.c_str());
  std::printf("mpjpe %.6f\nmpjpe_depth_offset %.6f\n", report.mpjpe_raw, report.mpjpe_offset);
  if (report.mpjpe_scaled)
    std::printf("mpjpe_sequence_scale %.6f (scale %.6f)\n", *report.mpjpe_scaled,
                report.fitted_scale);
  std::printf("depth_correlation %.4f\n", report.depth_corr);
  return 0;
}

struct ReconstructArgs {
  std::string checkpoint;
  std::string dataset_path;
  std::string out_dir;
  std::string format = "ply";
  std::size_t chunk = 512;
};

int run_reconstruct(const ReconstructArgs& args) {
  if (args.format != "ply" && args.format != "csv")
    throw InvalidInputError("unknown export format: " + args.format);
  const Dataset ds = read_dataset(args.dataset_path);
  LoadedCheckpoint loaded = load_checkpoint(args.checkpoint);
  if (loaded.model->config().keypoints != ds.manifest.keypoints)
    throw InvalidInputError("checkpoint and dataset keypoint counts differ");

  std::filesystem::create_directories(args.out_dir);
  const auto clouds = reconstruct_all(*loaded.model, ds, args.chunk);
  char name[64];
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    std::snprintf(name, sizeof(name), "/sample_%06zu.%s", i, args.format.c_str());
    const std::string path = args.out_dir + name;
    if (args.format == "ply")
      export_pointcloud_ply(path, clouds[i]);
    else
      export_pointcloud_csv(path, clouds[i]);
  }
  std::printf("wrote %zu point clouds to %s\n", clouds.size(), args.out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"2D-to-3D keypoint lifting: synthetic data, unsupervised training, evaluation"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a config file");

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic hinge-chain dataset");
  synth_cmd->add_option("--out", synth.out, "Output dataset file")->required();
  synth_cmd->add_option("--frames", synth.chain.frames, "Number of frames")
      ->capture_default_str();
  synth_cmd->add_option("--k", synth.chain.keypoints, "Keypoints per frame")
      ->capture_default_str();
  synth_cmd->add_option("--segments", synth.chain.segments, "Chain segments")
      ->capture_default_str();
  synth_cmd->add_option("--max-angle", synth.chain.max_angle_deg, "Max hinge angle (degrees)")
      ->capture_default_str();
  synth_cmd->add_option("--tube-radius", synth.chain.tube_radius, "Keypoint tube radius")
      ->capture_default_str();
  synth_cmd
      ->add_option("--occlusion-radius", synth.chain.occlusion_radius,
                   "Screen-distance radius for self-occlusion")
      ->capture_default_str();
  synth_cmd
      ->add_option("--depth-margin", synth.chain.depth_margin,
                   "Depth separation required for occlusion")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth.chain.seed, "Generator seed")->capture_default_str();

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a lifting network");
  train_cmd->add_option("--dataset", train.dataset_path, "Training dataset file")->required();
  train_cmd->add_option("--out-dir", train.out_dir, "Output directory")->required();
  train_cmd->add_option("--resume", train.resume, "Checkpoint to resume from");
  train_cmd->add_option("--family", train.family, "Model family: mlp or mixer")
      ->capture_default_str();
  train_cmd->add_option("--depth", train.depth, "Model depth (blocks)")->capture_default_str();
  train_cmd
      ->add_option("--width,--token", train.width, "Hidden width (MLP) or token size (mixer)")
      ->capture_default_str();
  train_cmd->add_option("--lr", train.train.learning_rate, "Learning rate")
      ->capture_default_str();
  train_cmd->add_option("--batch", train.train.batch_size, "Batch size")->capture_default_str();
  train_cmd->add_option("--steps", train.train.steps, "Total training steps")
      ->capture_default_str();
  train_cmd->add_option("--seed", train.train.seed, "Seed for init, batching and subsets")
      ->capture_default_str();
  train_cmd->add_flag("--sequence", train.train.sequence_mode,
                      "Use the whole sequence as one batch each step");
  train_cmd->add_flag("--augment-rotation", train.train.augment_rotation,
                      "Random in-plane rotation augmentation (orthographic only)");
  train_cmd
      ->add_option("--occlusion-weight", train.train.occlusion_weight,
                   "Weight of the occlusion loss")
      ->capture_default_str();
  train_cmd->add_flag("--no-occlusion", train.no_occlusion, "Disable the occlusion loss");
  train_cmd->add_option("--agc-lambda", train.train.agc_lambda, "Adaptive gradient clip ratio")
      ->capture_default_str();
  train_cmd
      ->add_option("--checkpoint-every", train.train.checkpoint_every,
                   "Periodic checkpoint interval in steps (0 = final only)")
      ->capture_default_str();
  train_cmd->add_option("--subset-random", train.sizes_random,
                        "Random-strategy subset sizes (repeatable)");
  train_cmd
      ->add_option("--subset-nn", train.sizes_nn,
                   "Nearest-neighbor-strategy subset sizes (repeatable)")
      ->capture_default_str();
  train_cmd
      ->add_option("--subsets-per-batch", train.subsets_per_batch, "Subsets drawn per batch")
      ->capture_default_str();
  train_cmd->add_option("--epsilon", train.epsilon, "Singular-value floor in the subset loss")
      ->capture_default_str();
  train_cmd
      ->add_option("--scale-mode", train.scale_mode,
                   "Residual scale divisor: auto, std or mean-depth")
      ->capture_default_str();

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint against ground truth");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Model checkpoint")->required();
  eval_cmd->add_option("--dataset", eval.dataset_path, "Dataset with ground truth")->required();
  eval_cmd->add_option("--report", eval.report_path, "Write the evaluation report here");
  eval_cmd->add_flag("--seq-scale", eval.seq_scale, "Also fit the sequence-level scale metric");
  eval_cmd->add_flag("--gt-as-prediction", eval.gt_as_prediction,
                     "Sanity mode: evaluate the ground truth against itself");
  eval_cmd->add_option("--chunk", eval.chunk, "Forward batch size")->capture_default_str();

  ReconstructArgs recon;
  CLI::App* recon_cmd = app.add_subcommand("reconstruct", "Export per-sample point clouds");
  recon_cmd->add_option("--checkpoint", recon.checkpoint, "Model checkpoint")->required();
  recon_cmd->add_option("--dataset", recon.dataset_path, "Dataset to reconstruct")->required();
  recon_cmd->add_option("--out-dir", recon.out_dir, "Output directory")->required();
  recon_cmd->add_option("--format", recon.format, "ply or csv")->capture_default_str();
  recon_cmd->add_option("--chunk", recon.chunk, "Forward batch size")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (synth_cmd->parsed()) return run_synth(synth);
    if (train_cmd->parsed())
      return run_train(train, train_cmd->count("--lr") > 0,
                       train_cmd->count("--steps") > 0);
    if (eval_cmd->parsed()) return run_eval(eval);
    if (recon_cmd->parsed()) return run_reconstruct(recon);
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
