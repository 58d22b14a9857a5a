#include "discap/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "discap/errors.hpp"
#include "discap/io.hpp"

namespace discap {

namespace {

using nlohmann::json;

struct GroupsBuildArgs {
  std::string embeddings, captions, output;
  std::string caption_embeddings;
  int k = 5;
  uint64_t seed = 0;
  std::string mode = "image-image";
};

void run_groups_build(const GroupsBuildArgs& args) {
  GroupMode mode;
  if (args.mode == "image-image") {
    mode = GroupMode::kImageImage;
  } else if (args.mode == "caption-retrieval") {
    mode = GroupMode::kCaptionRetrieval;
  } else {
    throw ValidationError("unknown mode '" + args.mode + "' (image-image | caption-retrieval)");
  }
  CaptionDataset dataset = read_captions(args.captions);
  EmbeddingStore store = read_embeddings(args.embeddings, StoreKind::kImage);
  EmbeddingStore caption_store(StoreKind::kCaption);
  const EmbeddingStore* caption_ptr = nullptr;
  if (mode == GroupMode::kCaptionRetrieval) {
    if (args.caption_embeddings.empty()) {
      throw ValidationError("caption-retrieval mode needs --caption-embeddings");
    }
    caption_store = read_embeddings(args.caption_embeddings, StoreKind::kCaption);
    caption_ptr = &caption_store;
  }
  GroupsFile file;
  file.k = args.k;
  file.mode = args.mode;
  file.seed = args.seed;
  file.groups = build_groups(store, dataset, args.k, args.seed, mode, caption_ptr);
  write_groups(file, args.output);
  std::cout << "wrote " << file.groups.size() << " groups to " << args.output << "\n";
}

struct DiswordsArgs {
  std::string captions, groups, output;
  std::string sentence_embeddings, image_embeddings;
};

void run_diswords(const DiswordsArgs& args) {
  CaptionDataset dataset = read_captions(args.captions);
  GroupsFile groups = read_groups(args.groups);
  bool weighted = !args.sentence_embeddings.empty() || !args.image_embeddings.empty();
  if (weighted && (args.sentence_embeddings.empty() || args.image_embeddings.empty())) {
    throw ValidationError("--sent-emb and --img-emb must be given together");
  }
  EmbeddingStore sentences(StoreKind::kImage), images(StoreKind::kImage);
  if (weighted) {
    sentences = read_embeddings(args.sentence_embeddings, StoreKind::kImage);
    images = read_embeddings(args.image_embeddings, StoreKind::kImage);
  }
  std::vector<DistinctProfile> profiles;
  for (const ImageGroup& group : groups.groups) {
    std::vector<TokenSeq> similar_gts;
    for (const std::string& id : group.similars) {
      const auto& toks = dataset.at(id).tokenized;
      similar_gts.insert(similar_gts.end(), toks.begin(), toks.end());
    }
    DistinctProfile profile;
    profile.target = group.target;
    profile.omega = distinct_words(dataset.at(group.target).tokenized, similar_gts);
    if (weighted) {
      profile.weights = relatedness_weights(profile.omega, sentences, images.vec(group.target));
    } else {
      for (const std::string& word : profile.omega) profile.weights[word] = 1.0;
    }
    profiles.push_back(std::move(profile));
  }
  write_profiles(profiles, args.output);
  std::cout << "wrote " << profiles.size() << " profiles to " << args.output << "\n";
}

struct EvalArgs {
  std::string candidates, captions, groups, diswords, output;
};

void run_eval(const EvalArgs& args) {
  std::map<std::string, TokenSeq> candidates = read_candidates(args.candidates);
  CaptionDataset dataset = read_captions(args.captions);
  GroupsFile groups = read_groups(args.groups);
  std::map<std::string, WordSet> omegas;
  bool have_omegas = !args.diswords.empty();
  if (have_omegas) {
    for (const DistinctProfile& profile : read_profiles(args.diswords)) {
      omegas[profile.target] = profile.omega;
    }
  }
  IdfTable idf = idf_build(dataset);
  MetricReport report = corpus_report(candidates, dataset, groups.groups,
                                      have_omegas ? &omegas : nullptr, idf);
  write_report(report, args.output);
  std::cout << "wrote report for " << report.per_image.size() << " images to " << args.output << "\n";
}

struct GdmaRunArgs {
  std::string features, groups, params, output;
  bool per_layer = false;
};

json attention_state_json(const AttentionState& att) {
  json similarity = json::array();
  for (const Mat& r : att.similarity) {
    json rows = json::array();
    for (int i = 0; i < r.rows; ++i) {
      rows.push_back(std::vector<double>(r.row(i).begin(), r.row(i).end()));
    }
    similarity.push_back(std::move(rows));
  }
  return json{{"R", similarity},
              {"R_tilde", att.object_similarity},
              {"d", att.scores.raw},
              {"D", att.scores.normalized},
              {"A", att.attention}};
}

void run_gdma(const GdmaRunArgs& args) {
  RegionFeatureSet features = read_region_features(args.features);
  GroupsFile groups = read_groups(args.groups);
  TrainState state = state_from_matrices(read_matrices(args.params));
  if (features.dim != state.encoder.width) {
    throw ValidationError("feature width " + std::to_string(features.dim) +
                          " != encoder width " + std::to_string(state.encoder.width));
  }
  json dump = json::array();
  for (const ImageGroup& group : groups.groups) {
    std::vector<Mat> member_features;
    for (const std::string& id : group.members()) {
      auto it = features.features.find(id);
      if (it == features.features.end()) throw ValidationError("no region features for image '" + id + "'");
      member_features.push_back(it->second);
    }
    json entry{{"target", group.target}, {"similars", group.similars}};
    if (args.per_layer) {
      json layers = json::array();
      for (const MemoryBank& bank : build_memory_banks_per_layer(member_features, state.encoder)) {
        layers.push_back(attention_state_json(
            run_attention(bank, 0, state.omega, state.bias, CaptionMode::kDistinctive)));
      }
      entry["layers"] = std::move(layers);
    } else {
      MemoryBank bank = build_memory_bank(member_features, state.encoder);
      entry.update(attention_state_json(
          run_attention(bank, 0, state.omega, state.bias, CaptionMode::kDistinctive)));
    }
    dump.push_back(std::move(entry));
  }
  std::ofstream out(args.output, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + args.output);
  out << json{{"groups", dump}}.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + args.output);
  std::cout << "wrote attention dump for " << groups.groups.size() << " groups to " << args.output << "\n";
}

struct ParamsInitArgs {
  std::string output;
  int d_m = 16, heads = 2, layers = 1, ffn = 32, vocab = 30;
  uint64_t seed = 0;
};

void run_params_init(const ParamsInitArgs& args) {
  TrainState state =
      fresh_state(args.d_m, args.heads, args.layers, args.ffn, args.vocab, args.seed);
  write_matrices(state_to_matrices(state), args.output);
  std::cout << "wrote fresh parameters to " << args.output << "\n";
}

struct TrainToyArgs {
  std::string config, outdir;
};

void run_train_toy(const TrainToyArgs& args) {
  ToyConfig config = read_toy_config(args.config);
  TrainResult result;
  if (!config.features_path.empty() || !config.captions_path.empty() ||
      !config.groups_path.empty()) {
    if (config.features_path.empty() || config.captions_path.empty() || config.groups_path.empty()) {
      throw ValidationError("features, captions, and groups must be given together");
    }
    ToyTask task;
    task.dataset = read_captions(config.captions_path);
    RegionFeatureSet features = read_region_features(config.features_path);
    if (features.dim != config.d_m) {
      throw ValidationError("feature width " + std::to_string(features.dim) +
                            " != configured d_m " + std::to_string(config.d_m));
    }
    task.features = std::move(features.features);
    task.groups = read_groups(config.groups_path).groups;
    task.vocab = Vocab::from_dataset(task.dataset);
    result = train_toy_on(task, config);
  } else {
    result = train_toy(config);
  }

  std::filesystem::create_directories(args.outdir);
  write_train_log(result.log, args.outdir + "/log.jsonl");
  write_matrices(state_to_matrices(result.state), args.outdir + "/checkpoint.ddcp");
  {
    std::ofstream out(args.outdir + "/vocab.json", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + args.outdir + "/vocab.json");
    out << json{{"words", result.task.vocab.words}}.dump(2) << "\n";
  }
  std::map<std::string, TokenSeq> rollouts = greedy_captions(result, 8);
  CaptionDataset greedy;
  for (const auto& [id, tokens] : rollouts) greedy.add(id, {join_tokens(tokens)});
  write_captions(greedy, args.outdir + "/greedy.json");
  if (!result.log.empty()) {
    const TrainLogEntry& last = result.log.back();
    std::cout << "trained " << last.step << " steps; final L_xe " << last.xe << ", L_d "
              << last.dis << ", L_m " << last.mem << ", omega " << last.omega << ", b "
              << last.bias << "\n";
  }
  std::cout << "outputs in " << args.outdir << "\n";
}

struct GradcheckArgs {
  uint64_t seed = 0;
  int instances = 100;
};

void run_gradcheck(const GradcheckArgs& args) {
  std::string report = gradcheck_report(args.seed, args.instances);
  std::cout << report;
  if (report.find("FAIL") != std::string::npos) {
    throw ValidationError("gradient check failed");
  }
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args) {
  CLI::App app{"distinctive image captioning toolkit"};
  app.require_subcommand(1);

  GroupsBuildArgs groups_args;
  CLI::App* groups_cmd = app.add_subcommand("groups", "similar image groups");
  groups_cmd->require_subcommand(1);
  CLI::App* build = groups_cmd->add_subcommand("build", "construct groups from embeddings");
  build->add_option("--embeddings", groups_args.embeddings, "image embedding file (DDEM)")->required();
  build->add_option("--captions", groups_args.captions, "caption dataset JSON")->required();
  build->add_option("-K", groups_args.k, "similar images per group")->default_val(5);
  build->add_option("--seed", groups_args.seed, "target-order seed")->default_val(0);
  build->add_option("--mode", groups_args.mode, "image-image | caption-retrieval")
      ->default_val("image-image");
  build->add_option("--caption-embeddings", groups_args.caption_embeddings,
                    "caption embedding file (DDEM), ids <image>#<n>");
  build->add_option("-o,--output", groups_args.output, "groups JSON output")->required();
  build->callback([&] { run_groups_build(groups_args); });

  DiswordsArgs diswords_args;
  CLI::App* diswords = app.add_subcommand("diswords", "distinctive word profiles per group target");
  diswords->add_option("--captions", diswords_args.captions, "caption dataset JSON")->required();
  diswords->add_option("--groups", diswords_args.groups, "groups JSON")->required();
  diswords->add_option("--sent-emb", diswords_args.sentence_embeddings,
                       "template-sentence embeddings (DDEM)");
  diswords->add_option("--img-emb", diswords_args.image_embeddings, "image embeddings (DDEM)");
  diswords->add_option("-o,--output", diswords_args.output, "profiles JSON output")->required();
  diswords->callback([&] { run_diswords(diswords_args); });

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "score candidate captions");
  eval->add_option("--candidates", eval_args.candidates, "candidate captions JSON (one per image)")->required();
  eval->add_option("--captions", eval_args.captions, "caption dataset JSON")->required();
  eval->add_option("--groups", eval_args.groups, "groups JSON")->required();
  eval->add_option("--diswords", eval_args.diswords, "distinctive word profiles JSON");
  eval->add_option("-o,--output", eval_args.output, "report JSON output")->required();
  eval->callback([&] { run_eval(eval_args); });

  GdmaRunArgs gdma_args;
  CLI::App* gdma_cmd = app.add_subcommand("gdma", "attention pipeline");
  gdma_cmd->require_subcommand(1);
  CLI::App* gdma_run = gdma_cmd->add_subcommand("run", "dump attention state per group");
  gdma_run->add_option("--features", gdma_args.features, "region feature file (DDRF)")->required();
  gdma_run->add_option("--groups", gdma_args.groups, "groups JSON")->required();
  gdma_run->add_option("--params", gdma_args.params, "parameter checkpoint (DDCP)")->required();
  gdma_run->add_flag("--per-layer", gdma_args.per_layer,
                     "attention from every encoder layer's memory, not only the final one");
  gdma_run->add_option("-o,--output", gdma_args.output, "dump JSON output")->required();
  gdma_run->callback([&] { run_gdma(gdma_args); });

  ParamsInitArgs params_args;
  CLI::App* params_cmd = app.add_subcommand("params", "parameter checkpoints");
  params_cmd->require_subcommand(1);
  CLI::App* params_init = params_cmd->add_subcommand("init", "write a fresh seeded checkpoint");
  params_init->add_option("--d-m", params_args.d_m, "model width")->default_val(16);
  params_init->add_option("--heads", params_args.heads, "attention heads")->default_val(2);
  params_init->add_option("--layers", params_args.layers, "encoder layers")->default_val(1);
  params_init->add_option("--ffn", params_args.ffn, "MLP hidden width")->default_val(32);
  params_init->add_option("--vocab", params_args.vocab, "vocabulary size")->default_val(30);
  params_init->add_option("--seed", params_args.seed, "init seed")->default_val(0);
  params_init->add_option("-o,--output", params_args.output, "checkpoint output")->required();
  params_init->callback([&] { run_params_init(params_args); });

  TrainToyArgs train_args;
  CLI::App* train = app.add_subcommand("train-toy", "desk-scale training loop");
  train->add_option("--config", train_args.config, "flat JSON config")->required();
  train->add_option("-o,--output", train_args.outdir, "output directory")->required();
  train->callback([&] { run_train_toy(train_args); });

  GradcheckArgs grad_args;
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gradcheck->add_option("--seed", grad_args.seed, "base seed")->default_val(0);
  gradcheck->add_option("--instances", grad_args.instances, "random instances")->default_val(100);
  gradcheck->callback([&] { run_gradcheck(grad_args); });

  std::vector<const char*> argv;
  argv.push_back("discap");
  for (const std::string& arg : args) argv.push_back(arg.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace discap
