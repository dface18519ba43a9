#include "lidadv/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "lidadv/error.hpp"
#include "lidadv/rng.hpp"
#include "text_util.hpp"

namespace lidadv {

namespace {

using Role = Experiment::Role;
using AttackKey = std::tuple<int, bool, double>;

std::string_view role_name(Role role) { return role == Role::target ? "target" : "source"; }

std::ofstream open_text(const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

/// Image side length when the input is a square image, else 0.
std::size_t square_side(std::size_t dim) {
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(dim))));
  return side * side == dim ? side : 0;
}

std::optional<DecisionRule> rule_for(AttackMethod attack, DecisionRule rule) {
  if (attack == AttackMethod::cw) return std::nullopt;
  return rule;
}

/// "cw", "ead-en" or "ead-l1"
std::string attack_tag(const ExperimentConfig& cfg) {
  std::string tag(to_string(cfg.attack));
  if (cfg.attack == AttackMethod::ead) tag += "-" + std::string(to_string(cfg.attack_cfg.rule));
  return tag;
}

}  // namespace

struct Experiment::Impl {
  std::optional<LabeledDataset> train;
  std::optional<LabeledDataset> test;
  std::optional<Network> models[2];
  std::optional<std::vector<AttackTarget>> targets[2];
  std::optional<std::vector<Tensor>> reference_pool;
  std::map<AttackKey, std::vector<AdversarialResult>> attacks;
  std::map<AttackKey, FeatureTable> features;
};

Experiment::Experiment(ExperimentConfig cfg, std::ostream* log)
    : cfg_(std::move(cfg)), log_(log), impl_(std::make_unique<Impl>()) {
  cfg_.validate();
  for (const char* sub : {"models", "adv", "features", "reports", "images"}) {
    std::filesystem::create_directories(cfg_.out_dir / sub);
  }
}

Experiment::~Experiment() = default;

const LabeledDataset& Experiment::train_data() {
  if (!impl_->train) {
    if (cfg_.dataset == "blobs") {
      LabeledDataset all = synthetic_blobs(cfg_.blob_train + cfg_.blob_test, cfg_.blob_classes,
                                           cfg_.blob_dim, cfg_.blob_spread, derive_seed(cfg_.seed, "blobs"));
      std::vector<std::size_t> train_idx(cfg_.blob_train);
      std::vector<std::size_t> test_idx(cfg_.blob_test);
      std::iota(train_idx.begin(), train_idx.end(), 0);
      std::iota(test_idx.begin(), test_idx.end(), cfg_.blob_train);
      impl_->train = all.subset(train_idx);
      impl_->test = all.subset(test_idx);
      impl_->test->split = Split::test;
    } else {
      impl_->train = load_idx(cfg_.train_images, cfg_.train_labels, Split::train);
      impl_->test = load_idx(cfg_.test_images, cfg_.test_labels, Split::test);
      if (cfg_.train_limit > 0 && cfg_.train_limit < impl_->train->size()) {
        std::vector<std::size_t> idx(cfg_.train_limit);
        std::iota(idx.begin(), idx.end(), 0);
        impl_->train = impl_->train->subset(idx);
      }
      const std::size_t classes = std::max(impl_->train->num_classes, impl_->test->num_classes);
      impl_->train->num_classes = classes;
      impl_->test->num_classes = classes;
    }
    if (log_) {
      *log_ << "data: " << impl_->train->size() << " train / " << impl_->test->size() << " test samples\n";
    }
  }
  return *impl_->train;
}

const LabeledDataset& Experiment::test_data() {
  train_data();
  return *impl_->test;
}

const Network& Experiment::model(Role role) {
  auto& slot = impl_->models[static_cast<int>(role)];
  if (slot) return *slot;
  const ModelSpec& spec = role == Role::target ? cfg_.target_model : cfg_.source_model;
  const auto& train = train_data();
  const std::size_t dim = train.samples.front().size();

  if (!spec.weights.empty()) {
    slot = load_network(spec.weights);
  } else {
    if (spec.dims.empty()) throw ConfigError(std::string(role_name(role)) + "_model not set");
    if (spec.dims.front() != dim || spec.dims.back() != train.num_classes) {
      throw ConfigError(std::string(role_name(role)) + "_model architecture does not match the data (" +
                        std::to_string(dim) + " inputs, " + std::to_string(train.num_classes) + " classes)");
    }
    const auto start = std::chrono::steady_clock::now();
    TrainParams hp = spec.train;
    hp.seed = derive_seed(spec.seed, "train-order");
    slot = lidadv::train(Network::initialized(spec.dims, derive_seed(spec.seed, "init")), train, hp);
    const std::filesystem::path out = cfg_.out_dir / "models" / (std::string(role_name(role)) + ".lidnn");
    std::filesystem::create_directories(out.parent_path());
    save_network(*slot, out);
    if (log_) {
      *log_ << role_name(role) << " model trained in "
            << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()
            << " s -> " << out.string() << '\n';
    }
  }
  if (slot->input_dim() != dim) throw ConfigError(std::string(role_name(role)) + " model input size mismatch");
  if (log_) {
    *log_ << role_name(role) << " model accuracy: train " << accuracy(*slot, train) << ", test "
          << accuracy(*slot, test_data()) << '\n';
  }
  return *slot;
}

const std::vector<AttackTarget>& Experiment::targets(bool both) {
  auto& slot = impl_->targets[both ? 1 : 0];
  if (!slot) {
    std::vector<const Network*> nets{&model(Role::target)};
    if (both) nets.push_back(&model(Role::source));
    slot = select_attack_targets(std::span<const Network* const>(nets), test_data(), cfg_.n_targets,
                                 derive_seed(cfg_.seed, both ? "targets-both" : "targets"));
  }
  return *slot;
}

std::string Experiment::artifact_stem(Role role, bool both_targets, double kappa) const {
  std::string stem(role_name(role));
  if (both_targets) stem += "-shared";
  return stem + "_" + attack_tag(cfg_) + "_k" + format_kappa(kappa);
}

const std::vector<AdversarialResult>& Experiment::attacks(Role role, bool both_targets, double kappa) {
  const AttackKey key{static_cast<int>(role), both_targets, kappa};
  if (auto it = impl_->attacks.find(key); it != impl_->attacks.end()) return it->second;

  const Network& net = model(role);
  const auto& tg = targets(both_targets);
  std::vector<Tensor> xs;
  std::vector<std::size_t> labels;
  for (const auto& t : tg) {
    xs.push_back(t.x);
    labels.push_back(t.label);
  }
  AttackConfig acfg = cfg_.attack_cfg;
  acfg.kappa = kappa;
  acfg.seed = cfg_.seed;
  const auto start = std::chrono::steady_clock::now();
  auto results = run_attacks(cfg_.attack, net, xs, labels, acfg, cfg_.threads);
  const auto ok = std::count_if(results.begin(), results.end(), [](const auto& r) { return r.success; });
  if (log_) {
    *log_ << "attack " << artifact_stem(role, both_targets, kappa) << ": " << ok << "/" << results.size()
          << " succeeded in "
          << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() << " s\n";
  }
  auto& stored = impl_->attacks.emplace(key, std::move(results)).first->second;
  write_attack_artifacts(role, both_targets);
  return stored;
}

void Experiment::write_attack_artifacts(Role role, bool both_targets) {
  const auto& tg = targets(both_targets);
  for (const auto& [key, results] : impl_->attacks) {
    if (std::get<0>(key) != static_cast<int>(role) || std::get<1>(key) != both_targets) continue;
    const double kappa = std::get<2>(key);
    const std::string stem = artifact_stem(role, both_targets, kappa);

    std::vector<AttackRecord> records;
    std::vector<Tensor> adversarial;
    for (std::size_t i = 0; i < results.size(); ++i) {
      records.push_back({tg[i].sample_id, cfg_.attack, cfg_.attack_cfg.rule, kappa, results[i]});
      adversarial.push_back(results[i].adversarial);
    }
    auto csv = open_text(cfg_.out_dir / "adv" / (stem + ".csv"));
    write_attack_csv(records, csv);
    write_idx_f64(adversarial, cfg_.out_dir / "adv" / (stem + ".f64.idx"));

    const std::size_t side = square_side(tg.empty() ? 0 : tg.front().x.size());
    if (side == 0) continue;
    std::filesystem::create_directories(cfg_.out_dir / "images");
    for (std::size_t i = 0; i < std::min(cfg_.image_dumps, results.size()); ++i) {
      const std::string base = stem + "_" + std::to_string(tg[i].sample_id);
      dump_image(tg[i].x, side, side, cfg_.out_dir / "images" / (base + "_clean.pgm"));
      dump_image(results[i].adversarial, side, side, cfg_.out_dir / "images" / (base + "_adv.pgm"));
    }
  }
}

void Experiment::load_attack_artifacts(Role role, bool both_targets) {
  const Network& net = model(role);
  const auto& tg = targets(both_targets);
  for (double kappa : cfg_.kappa_list) {
    const std::string stem = artifact_stem(role, both_targets, kappa);
    const auto path = cfg_.out_dir / "adv" / (stem + ".f64.idx");
    const auto rows = read_idx_f64(path);
    if (rows.size() != tg.size()) {
      throw InvalidInputError(path.string() + " holds " + std::to_string(rows.size()) +
                              " examples, expected " + std::to_string(tg.size()));
    }
    // c_used comes from the companion CSV
    std::vector<double> c_used(rows.size(), 0.0);
    if (std::ifstream csv(cfg_.out_dir / "adv" / (stem + ".csv")); csv) {
      std::string line;
      std::getline(csv, line);
      for (std::size_t i = 0; i < rows.size() && std::getline(csv, line); ++i) {
        const auto cells = split_csv_line(line);
        if (cells.size() == 11) c_used[i] = parse_double(cells[10]);
      }
    }
    AttackConfig acfg = cfg_.attack_cfg;
    acfg.kappa = kappa;
    std::vector<AdversarialResult> results;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      results.push_back(assess_adversarial(net, tg[i].x, tg[i].label, rows[i], acfg, c_used[i]));
    }
    impl_->attacks[AttackKey{static_cast<int>(role), both_targets, kappa}] = std::move(results);
    impl_->features.erase(AttackKey{static_cast<int>(role), both_targets, kappa});
  }
}

namespace {

struct ReferenceBatch {
  std::vector<Tensor> images;
  /// Position of each chunk member's clean image in `images` (targets mode).
  std::vector<std::optional<std::size_t>> counterpart;
};

}  // namespace

std::vector<bool> Experiment::train_split(std::size_t n_targets) const {
  std::vector<std::size_t> order(n_targets);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(cfg_.seed, "detector-split"));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(cfg_.train_fraction * static_cast<double>(n_targets)));
  std::vector<bool> is_train(n_targets, false);
  for (std::size_t i = 0; i < n_train; ++i) is_train[order[i]] = true;
  return is_train;
}

const FeatureTable& Experiment::features(Role role, bool both_targets, double kappa) {
  const AttackKey key{static_cast<int>(role), both_targets, kappa};
  if (auto it = impl_->features.find(key); it != impl_->features.end()) return it->second;

  const auto& results = attacks(role, both_targets, kappa);
  const auto& tg = targets(both_targets);
  const Network& net = model(role);
  const std::size_t batch = cfg_.lid.batch_size;

  if (!impl_->reference_pool) {
    const auto& train = train_data();
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(cfg_.seed, "reference-pool"));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(cfg_.reference_pool, idx.size()));
    if (idx.size() < batch) throw ConfigError("training split smaller than the LID batch size");
    std::vector<Tensor> pool;
    for (std::size_t i : idx) pool.push_back(train.samples[i]);
    impl_->reference_pool = std::move(pool);
  }
  const auto& pool = *impl_->reference_pool;

  FeatureTable table;
  table.kappa = kappa;
  table.attempted = results.size();
  const std::string stem = artifact_stem(role, both_targets, kappa);

  for (std::size_t chunk_start = 0; chunk_start < tg.size(); chunk_start += batch) {
    const std::size_t chunk_end = std::min(tg.size(), chunk_start + batch);
    const std::size_t chunk = chunk_start / batch;

    // Reference batch: fixed per chunk so clean features agree across kappa.
    std::vector<Tensor> refs;
    if (cfg_.reference == ReferenceSource::targets) {
      for (std::size_t i = chunk_start; i < chunk_end; ++i) refs.push_back(tg[i].x);
    }
    {
      std::vector<std::size_t> draw(pool.size());
      std::iota(draw.begin(), draw.end(), 0);
      Rng rng(derive_seed(cfg_.seed, "reference-batch", chunk));
      std::shuffle(draw.begin(), draw.end(), rng);
      for (std::size_t j = 0; refs.size() < batch; ++j) refs.push_back(pool[draw[j]]);
    }

    std::vector<LidQuery> queries;
    std::vector<std::size_t> owner;  // target index per query
    for (std::size_t i = chunk_start; i < chunk_end; ++i) {
      const auto& r = results[i];
      if (!r.success) continue;
      std::optional<std::size_t> cp;
      if (cfg_.reference == ReferenceSource::targets) cp = i - chunk_start;
      queries.push_back({tg[i].sample_id, SampleKind::clean, tg[i].x, cp});
      owner.push_back(i);
      if (r.l2 > 0.0) {
        queries.push_back({tg[i].sample_id, SampleKind::noisy,
                           make_noisy(tg[i].x, r.l2, cfg_.attack_cfg.box, derive_seed(cfg_.seed, "noise:" + stem, i)),
                           cp});
        owner.push_back(i);
      }
      queries.push_back({tg[i].sample_id, SampleKind::adversarial, r.adversarial, cp});
      owner.push_back(i);
    }
    if (queries.empty()) continue;

    LidConfig lcfg = cfg_.lid;
    FeatureBatch fb = extract_features(net, refs, queries, lcfg);
    table.dropped += fb.dropped.size();

    std::vector<bool> dropped(queries.size(), false);
    for (const auto& d : fb.dropped) dropped[d.query_index] = true;
    std::size_t next_feature = 0;
    for (std::size_t q = 0; q < queries.size(); ++q) {
      const std::size_t target_index = owner[q];
      if (table.samples.empty() || table.samples.back().target_index != target_index) {
        table.samples.push_back({target_index, tg[target_index].sample_id, {}, {}, {}});
      }
      if (dropped[q]) continue;
      auto& f = fb.features[next_feature++].values;
      auto& s = table.samples.back();
      switch (queries[q].kind) {
        case SampleKind::clean: s.clean = std::move(f); break;
        case SampleKind::noisy: s.noisy = std::move(f); break;
        case SampleKind::adversarial: s.adversarial = std::move(f); break;
      }
    }
  }

  // features/<stem>.csv
  std::vector<LidFeatureVector> flat;
  for (const auto& s : table.samples) {
    if (s.clean) flat.push_back({s.sample_id, SampleKind::clean, *s.clean});
    if (s.noisy) flat.push_back({s.sample_id, SampleKind::noisy, *s.noisy});
    if (s.adversarial) flat.push_back({s.sample_id, SampleKind::adversarial, *s.adversarial});
  }
  if (!flat.empty()) {
    auto out = open_text(cfg_.out_dir / "features" / (stem + ".csv"));
    write_features_csv(flat, out);
  }
  if (log_ && table.dropped > 0) *log_ << "features " << stem << ": dropped " << table.dropped << " degenerate queries\n";
  return impl_->features.emplace(key, std::move(table)).first->second;
}

void Experiment::write_feature_artifacts(Role role, bool both_targets) {
  for (double kappa : cfg_.kappa_list) features(role, both_targets, kappa);
}

DetectorData split_features(const FeatureTable& table, const std::vector<bool>& is_train) {
  DetectorData d;
  for (const auto& s : table.samples) {
    if (s.target_index >= is_train.size()) throw InvalidInputError("split does not cover every target");
    const bool tr = is_train[s.target_index];
    auto& pos = tr ? d.train_pos : d.test_pos;
    auto& neg = tr ? d.train_neg : d.test_neg;
    if (s.adversarial) pos.push_back(*s.adversarial);
    if (s.clean) neg.push_back(*s.clean);
    if (s.noisy) neg.push_back(*s.noisy);
  }
  return d;
}

ReportRow oblivious_row(const FeatureTable& table, const std::vector<bool>& is_train,
                        const DetectorParams& hp, AttackMethod attack,
                        std::optional<DecisionRule> rule, DetectorModel* trained) {
  ReportRow row;
  row.protocol = Protocol::oblivious;
  row.attack = attack;
  row.rule = rule;
  row.kappa = table.kappa;
  row.dropped_degenerate = table.dropped;
  const DetectorData d = split_features(table, is_train);
  if (d.train_pos.empty() || d.train_neg.empty() || d.test_pos.empty() || d.test_neg.empty()) return row;
  DetectorModel model = train_detector(d.train_pos, d.train_neg, hp);
  const DetectionMetrics m = evaluate_detector(model, d.test_pos, d.test_neg);
  row.auc = m.auc;
  row.detection_rate = m.detection_rate;
  row.tpr_at_5fpr = m.tpr_at_fpr;
  row.n = m.n_pos;
  if (trained) *trained = std::move(model);
  return row;
}

std::vector<ReportRow> Experiment::run_oblivious() {
  const auto is_train = train_split(targets(false).size());
  const auto rule = rule_for(cfg_.attack, cfg_.attack_cfg.rule);
  std::vector<ReportRow> rows;
  for (double kappa : cfg_.kappa_list) {
    DetectorModel det;
    ReportRow row = oblivious_row(features(Role::target, false, kappa), is_train, cfg_.detector,
                                  cfg_.attack, rule, &det);
    if (row.n > 0) {
      auto out = open_text(cfg_.out_dir / "models" / ("detector_" + artifact_stem(Role::target, false, kappa) + ".csv"));
      write_detector_csv(det, out);
    } else if (log_) {
      *log_ << "oblivious k=" << format_kappa(kappa) << ": no usable adversarial examples\n";
    }
    rows.push_back(row);
  }
  std::filesystem::create_directories(cfg_.out_dir / "reports");
  emit_report(rows, cfg_.out_dir / "reports" / ("oblivious_" + attack_tag(cfg_) + ".csv"));
  return rows;
}

std::vector<ReportRow> Experiment::run_ensemble() {
  if (cfg_.kappa_list.size() < 2) throw ConfigError("ensemble training needs at least two kappa values");
  const auto is_train = train_split(targets(false).size());
  const auto rule = rule_for(cfg_.attack, cfg_.attack_cfg.rule);

  std::vector<FeatureRow> pos;
  std::vector<FeatureRow> neg;
  for (double kappa : cfg_.kappa_list) {
    DetectorData d = split_features(features(Role::target, false, kappa), is_train);
    pos.insert(pos.end(), d.train_pos.begin(), d.train_pos.end());
    neg.insert(neg.end(), d.train_neg.begin(), d.train_neg.end());
  }
  std::optional<DetectorModel> det;
  if (!pos.empty() && !neg.empty()) {
    det = train_detector(pos, neg, cfg_.detector);
    auto out = open_text(cfg_.out_dir / "models" / ("detector_ensemble_" + attack_tag(cfg_) + ".csv"));
    write_detector_csv(*det, out);
  }

  std::vector<ReportRow> rows;
  for (double kappa : cfg_.kappa_list) {
    const FeatureTable& table = features(Role::target, false, kappa);
    ReportRow row;
    row.protocol = Protocol::ensemble;
    row.attack = cfg_.attack;
    row.rule = rule;
    row.kappa = kappa;
    row.dropped_degenerate = table.dropped;
    const DetectorData d = split_features(table, is_train);
    if (det && !d.test_pos.empty() && !d.test_neg.empty()) {
      const DetectionMetrics m = evaluate_detector(*det, d.test_pos, d.test_neg);
      row.auc = m.auc;
      row.detection_rate = m.detection_rate;
      row.tpr_at_5fpr = m.tpr_at_fpr;
      row.n = m.n_pos;
    }
    rows.push_back(row);
  }
  std::filesystem::create_directories(cfg_.out_dir / "reports");
  emit_report(rows, cfg_.out_dir / "reports" / ("ensemble_" + attack_tag(cfg_) + ".csv"));
  return rows;
}

std::vector<ReportRow> Experiment::run_transfer() {
  if (cfg_.source_model.weights.empty() && cfg_.source_model.dims.empty()) {
    throw ConfigError("transfer needs source_model");
  }
  if (cfg_.source_model.weights == cfg_.target_model.weights && cfg_.source_model.dims == cfg_.target_model.dims &&
      cfg_.source_model.seed == cfg_.target_model.seed) {
    throw ConfigError("source and target models are identical");
  }
  const auto& tg = targets(true);
  const auto is_train = train_split(tg.size());
  const auto rule = rule_for(cfg_.attack, cfg_.attack_cfg.rule);
  const Network& target_net = model(Role::target);
  const std::size_t batch = cfg_.lid.batch_size;

  std::vector<ReportRow> rows;
  for (double kappa : cfg_.kappa_list) {
    ReportRow row;
    row.protocol = Protocol::transfer;
    row.attack = cfg_.attack;
    row.rule = rule;
    row.kappa = kappa;
    row.post_detection_classification_rate = 0.0;
    row.classification_rate_wo_detection = 0.0;

    // detector trained on the target model, same attack and kappa
    DetectorModel det;
    const FeatureTable& own = features(Role::target, true, kappa);
    const ReportRow own_row = oblivious_row(own, is_train, cfg_.detector, cfg_.attack, rule, &det);
    const DetectorData own_split = split_features(own, is_train);

    const auto& crafted = attacks(Role::source, true, kappa);
    const auto source_ok = std::count_if(crafted.begin(), crafted.end(), [](const auto& r) { return r.success; });
    if (log_) {
      *log_ << "transfer k=" << format_kappa(kappa) << ": " << source_ok << "/" << crafted.size()
            << " source-successful examples\n";
    }
    if (own_row.n == 0) {
      if (log_) *log_ << "transfer k=" << format_kappa(kappa) << ": target detector could not be trained\n";
      row.dropped_degenerate = own.dropped;
      rows.push_back(row);
      continue;
    }

    // LID of each transferred example on the target model, same reference
    // batches as the target's own features.
    std::vector<FeatureRow> transferred;
    std::vector<std::size_t> transferred_idx;
    std::size_t dropped = 0;
    const auto& pool = *impl_->reference_pool;
    for (std::size_t chunk_start = 0; chunk_start < tg.size(); chunk_start += batch) {
      const std::size_t chunk_end = std::min(tg.size(), chunk_start + batch);
      std::vector<Tensor> refs;
      if (cfg_.reference == ReferenceSource::targets) {
        for (std::size_t i = chunk_start; i < chunk_end; ++i) refs.push_back(tg[i].x);
      }
      std::vector<std::size_t> draw(pool.size());
      std::iota(draw.begin(), draw.end(), 0);
      Rng rng(derive_seed(cfg_.seed, "reference-batch", chunk_start / batch));
      std::shuffle(draw.begin(), draw.end(), rng);
      for (std::size_t j = 0; refs.size() < batch; ++j) refs.push_back(pool[draw[j]]);

      std::vector<LidQuery> queries;
      std::vector<std::size_t> owner;
      for (std::size_t i = chunk_start; i < chunk_end; ++i) {
        if (!crafted[i].success) continue;
        std::optional<std::size_t> cp;
        if (cfg_.reference == ReferenceSource::targets) cp = i - chunk_start;
        queries.push_back({tg[i].sample_id, SampleKind::adversarial, crafted[i].adversarial, cp});
        owner.push_back(i);
      }
      if (queries.empty()) continue;
      FeatureBatch fb = extract_features(target_net, refs, queries, cfg_.lid);
      dropped += fb.dropped.size();
      std::vector<bool> is_dropped(queries.size(), false);
      for (const auto& d : fb.dropped) is_dropped[d.query_index] = true;
      std::size_t next = 0;
      for (std::size_t q = 0; q < queries.size(); ++q) {
        if (is_dropped[q]) continue;
        transferred.push_back(std::move(fb.features[next++].values));
        transferred_idx.push_back(owner[q]);
      }
    }
    row.dropped_degenerate = dropped;
    const std::size_t n = transferred.size();
    row.n = n;
    if (n == 0) {
      rows.push_back(row);
      continue;
    }

    std::size_t detected = 0;
    std::size_t correct = 0;
    std::size_t undetected_correct = 0;
    std::vector<double> scores;
    for (std::size_t t = 0; t < n; ++t) {
      const double s = score(det, transferred[t]);
      scores.push_back(s);
      const bool hit = s >= det.threshold;
      const std::size_t i = transferred_idx[t];
      const bool right = predict(target_net, crafted[i].adversarial) == tg[i].label;
      detected += hit ? 1 : 0;
      correct += right ? 1 : 0;
      undetected_correct += (!hit && right) ? 1 : 0;
    }
    const auto dn = static_cast<double>(n);
    row.detection_rate = static_cast<double>(detected) / dn;
    row.classification_rate_wo_detection = static_cast<double>(correct) / dn;
    row.post_detection_classification_rate = static_cast<double>(undetected_correct) / dn;
    const auto neg_scores = score_all(det, own_split.test_neg);
    row.auc = auc(scores, neg_scores);
    row.tpr_at_5fpr = tpr_at_fpr(scores, neg_scores, kFixedFpr);

    std::vector<LidFeatureVector> flat;
    for (std::size_t t = 0; t < n; ++t) {
      flat.push_back({tg[transferred_idx[t]].sample_id, SampleKind::adversarial, transferred[t]});
    }
    auto out = open_text(cfg_.out_dir / "features" / ("transfer_" + artifact_stem(Role::source, true, kappa) + ".csv"));
    write_features_csv(flat, out);
    rows.push_back(row);
  }
  std::filesystem::create_directories(cfg_.out_dir / "reports");
  emit_report(rows, cfg_.out_dir / "reports" / ("transfer_" + attack_tag(cfg_) + ".csv"));
  return rows;
}

}  // namespace lidadv
