// mpp: command-line front end for the extraction / encoding / classification
// pipeline. Run `mpp --help` or `mpp <command> --help` for usage.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mpp/confmap.h"
#include "mpp/convnet.h"
#include "mpp/errors.h"
#include "mpp/gmm.h"
#include "mpp/harness.h"
#include "mpp/image_io.h"
#include "mpp/parallel.h"
#include "mpp/pca.h"
#include "mpp/pipeline.h"
#include "mpp/pooling.h"
#include "mpp/pyramid.h"
#include "mpp/svm.h"
#include "mpp/synthetic.h"

namespace {

struct GlobalOptions {
  std::string config_path;
  std::string preset;
  std::vector<std::string> overrides;
  int threads = 0;
  std::string cache_dir;
};

mpp::PipelineConfig effective_config(const GlobalOptions& g) {
  mpp::PipelineConfig c;
  if (!g.preset.empty()) c = mpp::preset_config(g.preset);
  if (!g.config_path.empty()) c = mpp::load_config(g.config_path, c);
  for (const std::string& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw mpp::ConfigError("--set expects key=value, got '" + kv + "'");
    mpp::apply_setting(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.threads > 0) c.threads = g.threads;
  if (!g.cache_dir.empty()) c.cache_dir = g.cache_dir;
  return c;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw mpp::InputError("cannot open " + out_path + " for writing");
  out << text;
}

std::string sweep_table(const mpp::EvalReport& report) {
  std::ostringstream out;
  out << "range      strategy  length      top1     mAP\n";
  for (const auto& r : report.sweep) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-10s %-8s %7zu  %7.4f  %7.4f\n", r.range.c_str(),
                  mpp::pool_strategy_name(r.strategy), r.length, r.top1, r.map);
    out << line;
  }
  return out.str();
}

std::pair<std::size_t, std::size_t> parse_grid(const std::string& text) {
  const auto x = text.find_first_of("xX");
  try {
    if (x == std::string::npos) {
      const auto n = std::stoul(text);
      return {n, n};
    }
    return {std::stoul(text.substr(0, x)), std::stoul(text.substr(x + 1))};
  } catch (const std::logic_error&) {
    throw mpp::ConfigError("--grid expects HxW, got '" + text + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-scale pyramid pooled Fisher representations"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("-c,--config", g.config_path, "key = value configuration file");
  app.add_option("--preset", g.preset, "start from a preset (paper, desk)");
  app.add_option("-s,--set", g.overrides, "override a configuration key (key=value)");
  app.add_option("-j,--threads", g.threads, "worker threads");
  app.add_option("--cache-dir", g.cache_dir, "artifact cache (default: $MPP_CACHE_DIR)");

  // extract
  auto* extract = app.add_subcommand("extract", "dense multi-scale activations");
  std::string image_path, out_path, net_path = "toy";
  std::uint32_t scales = 3;
  std::string step = "2";
  bool naive = false;
  std::uint64_t net_seed = 7;
  extract->add_option("--image", image_path, "single PGM/PPM image (otherwise: dataset stage)");
  extract->add_option("-o,--out", out_path, "MPPD output for --image");
  extract->add_option("--net", net_path, "network file or 'toy'");
  extract->add_option("--net-seed", net_seed, "seed of the toy network");
  extract->add_option("--scales", scales, "pyramid levels");
  extract->add_option("--scale-step", step, "2 (edge doubling) or sqrt2 (area doubling)");
  extract->add_flag("--naive", naive, "crop-and-forward every window");

  // fit-pca / fit-gmm
  auto* fit_pca = app.add_subcommand("fit-pca", "PCA on sampled training descriptors");
  std::vector<std::string> inputs;
  std::size_t dim = 16;
  fit_pca->add_option("--in", inputs, "MPPD files (otherwise: dataset stage)");
  fit_pca->add_option("--dim", dim, "output dimension");
  fit_pca->add_option("-o,--out", out_path, "MPPP output");

  auto* fit_gmm = app.add_subcommand("fit-gmm", "GMM vocabulary in PCA space");
  std::string pca_path, gmm_path, svm_path;
  std::size_t k = 8;
  std::uint64_t seed = 1;
  fit_gmm->add_option("--in", inputs, "MPPD files (otherwise: dataset stage)");
  fit_gmm->add_option("--pca", pca_path, "MPPP model applied first");
  fit_gmm->add_option("-k,--components", k, "mixture components");
  fit_gmm->add_option("--seed", seed, "initialization seed");
  fit_gmm->add_option("-o,--out", out_path, "MPPG output");

  // encode
  auto* encode = app.add_subcommand("encode", "pooled Fisher representations");
  std::string pool_name = "mpp", scale_range;
  encode->add_option("--in", inputs, "MPPD files (otherwise: dataset stage)");
  encode->add_option("--pca", pca_path, "MPPP model");
  encode->add_option("--gmm", gmm_path, "MPPG model");
  encode->add_option("--pool", pool_name, "mpp, nfk, csf, mpp-sp");
  encode->add_option("--scales", scale_range, "scale selection, e.g. 1-3");
  encode->add_option("-o,--out", out_path, "MPPF output (one record per input)");

  auto* train_svm = app.add_subcommand("train-svm", "one-vs-rest linear SVMs (dataset stage)");

  auto* predict = app.add_subcommand("predict", "score representations with a model");
  predict->add_option("--model", svm_path, "MPPS model (otherwise: the dataset's model)");
  predict->add_option("--in", inputs, "MPPF files (otherwise: the dataset's test split)");

  auto* eval = app.add_subcommand("eval", "run the whole pipeline and report metrics");
  eval->add_option("-o,--out", out_path, "write the JSON report here");

  auto* sweep = app.add_subcommand("sweep", "metrics per scale range and strategy");
  sweep->add_option("-o,--out", out_path, "write the JSON report here");

  auto* confmap = app.add_subcommand("confmap", "per-patch confidence map of one image");
  std::string class_name, grid = "16x16";
  confmap->add_option("--class", class_name, "class label")->required();
  confmap->add_option("--grid", grid, "map size HxW");
  confmap->add_option("--image", image_path, "PGM/PPM image")->required();
  confmap->add_option("-o,--out", out_path, "PGM output")->required();

  auto* synth = app.add_subcommand("synth", "write one synthetic image");
  std::string generator = "scale-noise";
  std::size_t cls = 0;
  synth->add_option("--generator", generator, "scale-noise or planted-square");
  synth->add_option("--class", cls, "class index (planted-square: 0 absent, 1 present)");
  synth->add_option("--seed", seed, "image seed");
  synth->add_option("-o,--out", out_path, "PGM output")->required();

  auto* make_net = app.add_subcommand("make-net", "write the seeded toy network");
  make_net->add_option("--seed", net_seed, "weight seed");
  make_net->add_option("-o,--out", out_path, "MPPN output")->required();

  auto* show_config = app.add_subcommand("config", "print the effective configuration");

  CLI11_PARSE(app, argc, argv);

  try {
    const mpp::PipelineConfig config = effective_config(g);
    mpp::set_num_threads(config.threads);

    if (extract->parsed()) {
      if (image_path.empty()) {
        const auto c = mpp::run_extract(config);
        std::cout << "extracted " << c.images << " images, " << c.descriptors_per_image
                  << " descriptors each\n"
                  << "dense MACs " << c.dense_macs << ", naive MACs " << c.naive_macs << '\n';
        return 0;
      }
      if (out_path.empty()) throw mpp::ConfigError("extract --image needs --out");
      const mpp::NetworkSpec net =
          net_path == "toy" ? mpp::make_toy_network(net_seed) : mpp::load_network_any(net_path);
      const mpp::Tensor image = mpp::to_channels(mpp::read_pnm(image_path), net.input_channels);
      mpp::ForwardStats stats;
      const auto set = mpp::extract_all(net, image, scales,
                                        mpp::ExtractionOptions{mpp::parse_scale_step(step), naive}, &stats);
      mpp::save_descriptors(set, out_path);
      std::cout << set.size() << " descriptors of dim " << set.dim() << ", " << stats.macs << " MACs\n";
    } else if (fit_pca->parsed()) {
      if (inputs.empty()) {
        mpp::run_extract(config);
        mpp::run_fit_pca(config);
        std::cout << mpp::artifact_paths(config).pca << '\n';
        return 0;
      }
      if (out_path.empty()) throw mpp::ConfigError("fit-pca --in needs --out");
      mpp::DescriptorSet all;
      for (const auto& in : inputs) {
        const auto set = mpp::load_descriptors(in);
        if (all.dim() == 0) all = mpp::DescriptorSet(set.dim(), set.num_scales());
        all.append_all(set);
      }
      const auto rows = mpp::sample_rows(all.size(), config.pca_samples, config.seed);
      mpp::save_pca(mpp::fit_pca(all.select(rows), dim), out_path);
    } else if (fit_gmm->parsed()) {
      if (inputs.empty()) {
        mpp::run_fit_gmm(config);
        std::cout << mpp::artifact_paths(config).gmm << '\n';
        return 0;
      }
      if (out_path.empty()) throw mpp::ConfigError("fit-gmm --in needs --out");
      mpp::DescriptorSet all;
      for (const auto& in : inputs) {
        const auto set = mpp::load_descriptors(in);
        if (all.dim() == 0) all = mpp::DescriptorSet(set.dim(), set.num_scales());
        all.append_all(set);
      }
      if (!pca_path.empty()) all = mpp::project(mpp::load_pca(pca_path), all);
      mpp::GmmOptions options;
      options.seed = seed;
      mpp::GmmFitReport report;
      mpp::save_gmm(mpp::fit_gmm(all, k, options, &report), out_path);
      std::cout << report.iterations << " EM iterations, mean log-likelihood "
                << report.log_likelihood.back() << '\n';
    } else if (encode->parsed()) {
      if (inputs.empty()) {
        mpp::run_encode(config);
        std::cout << mpp::artifact_paths(config).train_reps << '\n'
                  << mpp::artifact_paths(config).test_reps << '\n';
        return 0;
      }
      if (gmm_path.empty() || out_path.empty()) throw mpp::ConfigError("encode --in needs --gmm and --out");
      const mpp::GmmModel gmm = mpp::load_gmm(gmm_path);
      const mpp::ScaleMask mask = scale_range.empty() ? mpp::ScaleMask::all() : mpp::ScaleMask::parse(scale_range);
      std::vector<mpp::PooledRepresentation> reps;
      for (const auto& in : inputs) {
        mpp::DescriptorSet set = mpp::load_descriptors(in);
        if (!pca_path.empty()) set = mpp::project(mpp::load_pca(pca_path), set);
        reps.push_back(mpp::pool(mpp::parse_pool_strategy(pool_name), gmm, set, mask));
      }
      mpp::save_representations(reps, out_path);
    } else if (train_svm->parsed()) {
      mpp::run_extract(config);
      if (config.pool != mpp::PoolStrategy::kAp) {
        mpp::run_fit_pca(config);
        mpp::run_fit_gmm(config);
      }
      mpp::run_encode(config);
      mpp::run_train_svm(config);
      std::cout << mpp::artifact_paths(config).svm << '\n';
    } else if (predict->parsed()) {
      const auto paths = mpp::artifact_paths(config);
      const mpp::LinearModel model = mpp::load_linear_model(svm_path.empty() ? paths.svm : svm_path);
      if (inputs.empty()) inputs.push_back(paths.test_reps);
      for (const auto& in : inputs) {
        const auto reps = mpp::load_representations(in);
        for (std::size_t i = 0; i < reps.size(); ++i) {
          const auto s = mpp::score(model, reps[i]);
          std::cout << in << '[' << i << "] " << model.classes[mpp::predict(model, reps[i])];
          for (double v : s) std::cout << ' ' << v;
          std::cout << '\n';
        }
      }
    } else if (eval->parsed()) {
      const mpp::EvalReport report = mpp::run_pipeline(config);
      emit(report.to_json(), out_path);
      if (!out_path.empty()) {
        std::cout << "top-1 " << report.top1 << ", mAP " << report.map << '\n';
      }
    } else if (sweep->parsed()) {
      const mpp::EvalReport report = mpp::scale_sweep(config);
      std::cout << sweep_table(report);
      if (!out_path.empty()) emit(report.to_json(), out_path);
    } else if (confmap->parsed()) {
      const auto paths = mpp::artifact_paths(config);
      const mpp::LinearModel model = mpp::load_linear_model(paths.svm);
      const auto it = std::find(model.classes.begin(), model.classes.end(), class_name);
      if (it == model.classes.end()) throw mpp::ConfigError("unknown class '" + class_name + "'");
      const mpp::PcaModel pca = mpp::load_pca(paths.pca);
      const mpp::GmmModel gmm = mpp::load_gmm(paths.gmm);
      const mpp::NetworkSpec net = mpp::network_for(config);
      const mpp::Tensor image = mpp::to_channels(mpp::read_pnm(image_path), net.input_channels);
      auto raw = mpp::extract_all(net, image, config.scales,
                                        mpp::ExtractionOptions{config.scale_step, false});
      if (config.descriptor_l2) mpp::l2_normalize_rows(raw);
      const auto [h, w] = parse_grid(grid);
      const auto map = mpp::build_map(mpp::project(pca, raw), gmm, model,
                                      static_cast<std::size_t>(it - model.classes.begin()), h, w);
      mpp::export_map(map, out_path);
      std::cout << out_path << '\n';
    } else if (synth->parsed()) {
      mpp::Tensor image;
      if (generator == "scale-noise") {
        image = mpp::make_scale_noise_image(cls, seed);
      } else if (generator == "planted-square") {
        image = mpp::make_planted_square_image(cls != 0, seed);
      } else {
        throw mpp::ConfigError("unknown generator '" + generator + "'");
      }
      mpp::write_pnm(image, out_path);
    } else if (make_net->parsed()) {
      mpp::save_network(mpp::make_toy_network(net_seed), out_path);
    } else if (show_config->parsed()) {
      std::cout << mpp::config_to_text(config);
      std::cout << "# representation length " << config.fv_length() << '\n';
    }
  } catch (const mpp::StageError& e) {
    std::cerr << "error (" << e.stage() << " stage needed): " << e.what() << '\n';
    return 3;
  } catch (const mpp::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
