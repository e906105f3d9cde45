// Copyright 2026 The fastpoint Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastpoint/pipeline/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <set>
#include <sstream>

#include "fastpoint/error.hpp"
#include "fastpoint/kitti.hpp"

namespace fastpoint::pipeline {

double Schedule::lr_at(std::size_t epoch) const {
  double r = lr;
  for (std::size_t s : lr_steps) {
    if (epoch >= s) r *= lr_decay;
  }
  return r;
}

nn::ShapePlan PipelineConfig::plan() const { return nn::infer_shapes(net, voxel.dims()); }

void PipelineConfig::validate() const {
  voxel.validate();
  anchors.validate();
  net.validate();
  loss.validate();
  refiner.validate();
  if (!(pos_iou > 0.0 && pos_iou <= 1.0) || !(neg_iou >= 0.0 && neg_iou <= pos_iou)) {
    throw ConfigMismatch("target thresholds need 0 <= neg_iou <= pos_iou <= 1");
  }
  if (net.anchors_per_cell != anchors.per_cell()) {
    throw ConfigMismatch("head predicts " + std::to_string(net.anchors_per_cell) + " anchors per cell but the anchor spec has " +
                         std::to_string(anchors.per_cell()));
  }
  const auto dims = voxel.dims();
  const nn::ShapePlan p = plan();
  const std::size_t rows = p.map_rows(), cols = p.map_cols();
  if (dims[0] % cols != 0 || dims[1] % rows != 0 || dims[0] / cols != dims[1] / rows) {
    throw ConfigMismatch("feature map " + std::to_string(rows) + "x" + std::to_string(cols) +
                         " does not tile the voxel grid " + std::to_string(dims[1]) + "x" + std::to_string(dims[0]) +
                         " with one stride");
  }
  if (refiner.feature_channels != p.fused_channels()) {
    throw ConfigMismatch("refiner expects " + std::to_string(refiner.feature_channels) +
                         " feature channels but the fused map has " + std::to_string(p.fused_channels()));
  }
  if (post.top_k == 0 || !(post.nms_iou >= 0.0 && post.nms_iou <= 1.0) ||
      !(post.score_thresh >= 0.0 && post.score_thresh <= 1.0)) {
    throw ConfigMismatch("postprocess needs top_k > 0 and thresholds in [0, 1]");
  }
  if (refiner_train.max_proposals == 0 || refiner_train.margin < 0.0) {
    throw ConfigMismatch("refiner training needs max_proposals > 0 and margin >= 0");
  }
  for (const Schedule* s : {&rpn_schedule, &refiner_schedule}) {
    if (!(s->lr > 0.0) || !(s->lr_decay > 0.0) || s->weight_decay < 0.0) {
      throw ConfigMismatch("schedule needs lr > 0, lr_decay > 0 and weight_decay >= 0");
    }
    if (s->frozen_norm_epochs > s->epochs) throw ConfigMismatch("frozen_norm_epochs exceeds epochs");
  }
  if (synthetic.min_objects > synthetic.max_objects) throw ConfigMismatch("synthetic min_objects > max_objects");
}

namespace {

void check_keys(const YAML::Node& node, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!node) return;
  if (!node.IsMap()) throw ConfigMismatch("'" + where + "' must be a mapping");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!ok.count(key)) throw ConfigMismatch("unknown key '" + where + "." + key + "'");
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out) {
  if (node && node[key]) out = node[key].as<T>();
}

void read_range(const YAML::Node& node, const char* key, AxisRange& out) {
  if (!node || !node[key]) return;
  const auto v = node[key].as<std::vector<double>>();
  if (v.size() != 2) throw ConfigMismatch(std::string("range '") + key + "' needs two values");
  out = {v[0], v[1]};
}

void read_schedule(const YAML::Node& node, const std::string& where, Schedule& s) {
  check_keys(node, where, {"epochs", "lr", "lr_steps", "lr_decay", "weight_decay", "frozen_norm_epochs"});
  read(node, "epochs", s.epochs);
  read(node, "lr", s.lr);
  read(node, "lr_steps", s.lr_steps);
  read(node, "lr_decay", s.lr_decay);
  read(node, "weight_decay", s.weight_decay);
  read(node, "frozen_norm_epochs", s.frozen_norm_epochs);
}

constexpr double kDeg = kPi / 180.0;

nn::AttentionMode attention_from(const std::string& s) {
  if (s == "channel") return nn::AttentionMode::kChannel;
  if (s == "scalar") return nn::AttentionMode::kScalar;
  if (s == "none") return nn::AttentionMode::kNone;
  throw ConfigMismatch("attention must be channel, scalar or none, got '" + s + "'");
}

const char* attention_name(nn::AttentionMode m) {
  switch (m) {
    case nn::AttentionMode::kChannel: return "channel";
    case nn::AttentionMode::kScalar: return "scalar";
    case nn::AttentionMode::kNone: return "none";
  }
  return "channel";
}

MarginMode margin_mode_from(const std::string& s) {
  if (s == "all") return MarginMode::kAllFaces;
  if (s == "bev") return MarginMode::kBevOnly;
  throw ConfigMismatch("margin_mode must be all or bev, got '" + s + "'");
}

PipelineConfig from_yaml(const YAML::Node& root) {
  PipelineConfig c;
  check_keys(root, "config",
             {"seed", "voxel", "anchors", "net", "targets", "loss", "refiner", "postprocess", "augment", "train", "synthetic",
              "dataset"});
  read(root, "seed", c.seed);

  const auto voxel = root["voxel"];
  check_keys(voxel, "voxel", {"range", "size", "max_points_per_voxel"});
  if (voxel && voxel["range"]) {
    const auto r = voxel["range"];
    check_keys(r, "voxel.range", {"x", "y", "z"});
    read_range(r, "x", c.voxel.range.x);
    read_range(r, "y", c.voxel.range.y);
    read_range(r, "z", c.voxel.range.z);
  }
  if (voxel && voxel["size"]) {
    const auto v = voxel["size"].as<std::vector<double>>();
    if (v.size() != 3) throw ConfigMismatch("voxel.size needs three values");
    c.voxel.voxel_size = {v[0], v[1], v[2]};
  }
  read(voxel, "max_points_per_voxel", c.voxel.max_points_per_voxel);

  const auto anchors = root["anchors"];
  check_keys(anchors, "anchors", {"sizes", "angles_deg", "z_center"});
  if (anchors && anchors["sizes"]) {
    c.anchors.sizes.clear();
    for (const auto& s : anchors["sizes"]) {
      const auto v = s.as<std::vector<double>>();
      if (v.size() != 3) throw ConfigMismatch("anchor sizes are [l, w, h]");
      c.anchors.sizes.push_back({v[0], v[1], v[2]});
    }
  }
  if (anchors && anchors["angles_deg"]) {
    c.anchors.angles.clear();
    for (double d : anchors["angles_deg"].as<std::vector<double>>()) c.anchors.angles.push_back(d * kDeg);
  }
  read(anchors, "z_center", c.anchors.z_center);

  const auto net = root["net"];
  check_keys(net, "net", {"width", "encoder_channels", "batchnorm", "bn_momentum", "cls_prior"});
  read(net, "width", c.net_width);
  if (!(c.net_width > 0.0)) throw ConfigMismatch("net.width must be positive");
  c.net = nn::NetConfig::reference().scaled(c.net_width);
  read(net, "encoder_channels", c.net.encoder_channels);
  read(net, "batchnorm", c.net.batchnorm);
  read(net, "bn_momentum", c.net.bn_momentum);
  read(net, "cls_prior", c.net.cls_prior);
  c.net.anchors_per_cell = c.anchors.per_cell();

  const auto targets = root["targets"];
  check_keys(targets, "targets", {"pos_iou", "neg_iou"});
  read(targets, "pos_iou", c.pos_iou);
  read(targets, "neg_iou", c.neg_iou);

  const auto loss = root["loss"];
  check_keys(loss, "loss", {"gamma", "sigma", "ohem_keep", "eps"});
  read(loss, "gamma", c.loss.gamma);
  read(loss, "sigma", c.loss.sigma);
  read(loss, "ohem_keep", c.loss.ohem_keep);
  read(loss, "eps", c.loss.eps);

  const auto ref = root["refiner"];
  check_keys(ref, "refiner",
             {"feature_channels", "coord_channels", "pointnet", "head", "attention", "proposal_iou", "max_proposals",
              "max_points", "margin", "margin_mode"});
  c.refiner.feature_channels = 0;
  read(ref, "feature_channels", c.refiner.feature_channels);
  read(ref, "coord_channels", c.refiner.coord_channels);
  read(ref, "pointnet", c.refiner.pointnet);
  read(ref, "head", c.refiner.head);
  if (ref && ref["attention"]) c.refiner.attention = attention_from(ref["attention"].as<std::string>());
  read(ref, "proposal_iou", c.refiner_train.proposal_iou);
  read(ref, "max_proposals", c.refiner_train.max_proposals);
  read(ref, "max_points", c.refiner_train.max_points);
  read(ref, "margin", c.refiner_train.margin);
  if (ref && ref["margin_mode"]) c.refiner_train.margin_mode = margin_mode_from(ref["margin_mode"].as<std::string>());

  const auto post = root["postprocess"];
  check_keys(post, "postprocess", {"score_thresh", "nms_iou", "top_k"});
  read(post, "score_thresh", c.post.score_thresh);
  read(post, "nms_iou", c.post.nms_iou);
  read(post, "top_k", c.post.top_k);

  const auto aug = root["augment"];
  check_keys(aug, "augment", {"enabled", "mixup", "mixup_objects", "global", "perturb"});
  read(aug, "enabled", c.augment_enabled);
  read(aug, "mixup", c.augment.mixup);
  read(aug, "mixup_objects", c.augment.mixup_objects);
  if (aug && aug["global"]) {
    const auto g = aug["global"];
    check_keys(g, "augment.global", {"enabled", "flip_prob", "scale", "rotation_deg"});
    read(g, "enabled", c.augment.global);
    read(g, "flip_prob", c.augment.global_params.flip_prob);
    if (g["scale"]) {
      const auto v = g["scale"].as<std::vector<double>>();
      if (v.size() != 2) throw ConfigMismatch("augment.global.scale needs [min, max]");
      c.augment.global_params.scale_min = v[0];
      c.augment.global_params.scale_max = v[1];
    }
    if (g["rotation_deg"]) c.augment.global_params.rotation_max = g["rotation_deg"].as<double>() * kDeg;
  }
  if (aug && aug["perturb"]) {
    const auto p = aug["perturb"];
    check_keys(p, "augment.perturb", {"enabled", "sigma_xy", "sigma_z", "rotation_deg", "max_tries"});
    read(p, "enabled", c.augment.perturb);
    read(p, "sigma_xy", c.augment.perturb_params.sigma_xy);
    read(p, "sigma_z", c.augment.perturb_params.sigma_z);
    if (p["rotation_deg"]) c.augment.perturb_params.rotation_max = p["rotation_deg"].as<double>() * kDeg;
    read(p, "max_tries", c.augment.perturb_params.max_tries);
  }

  const auto train = root["train"];
  check_keys(train, "train", {"rpn", "refiner"});
  if (train) {
    read_schedule(train["rpn"], "train.rpn", c.rpn_schedule);
    read_schedule(train["refiner"], "train.refiner", c.refiner_schedule);
  }

  const auto syn = root["synthetic"];
  check_keys(syn, "synthetic",
             {"scenes", "min_objects", "max_objects", "ground_z", "surface_density", "ground_points", "clutter_points",
              "min_points"});
  read(syn, "scenes", c.synthetic.scenes);
  read(syn, "min_objects", c.synthetic.min_objects);
  read(syn, "max_objects", c.synthetic.max_objects);
  read(syn, "ground_z", c.synthetic.ground_z);
  read(syn, "surface_density", c.synthetic.surface_density);
  read(syn, "ground_points", c.synthetic.ground_points);
  read(syn, "clutter_points", c.synthetic.clutter_points);
  read(syn, "min_points", c.synthetic.min_points);

  const auto ds = root["dataset"];
  check_keys(ds, "dataset", {"root", "split"});
  if (ds && ds["root"]) c.dataset_root = ds["root"].as<std::string>();
  read(ds, "split", c.split);

  if (c.refiner.feature_channels == 0) c.refiner.feature_channels = c.plan().fused_channels();
  return c;
}

}  // namespace

PipelineConfig parse_config(std::string_view yaml) {
  PipelineConfig c;
  try {
    c = from_yaml(YAML::Load(std::string(yaml)));
  } catch (const YAML::Exception& e) {
    throw ConfigMismatch(std::string("bad config: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("config not found: " + path.string());
  return parse_config(kitti::read_text_file(path));
}

std::string dump_config(const PipelineConfig& c) {
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << YAML::BeginMap;
  e << YAML::Key << "seed" << YAML::Value << c.seed;
  e << YAML::Key << "voxel" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "range" << YAML::Value << YAML::BeginMap;
  for (auto [name, r] : {std::pair{"x", c.voxel.range.x}, std::pair{"y", c.voxel.range.y}, std::pair{"z", c.voxel.range.z}}) {
    e << YAML::Key << name << YAML::Value << YAML::Flow << std::vector<double>{r.min, r.max};
  }
  e << YAML::EndMap;
  e << YAML::Key << "size" << YAML::Value << YAML::Flow
    << std::vector<double>(c.voxel.voxel_size.begin(), c.voxel.voxel_size.end());
  e << YAML::Key << "max_points_per_voxel" << YAML::Value << c.voxel.max_points_per_voxel;
  e << YAML::EndMap;

  e << YAML::Key << "anchors" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "sizes" << YAML::Value << YAML::BeginSeq;
  for (const auto& s : c.anchors.sizes) e << YAML::Flow << std::vector<double>{s.l, s.w, s.h};
  e << YAML::EndSeq;
  std::vector<double> deg;
  for (double a : c.anchors.angles) deg.push_back(a / kDeg);
  e << YAML::Key << "angles_deg" << YAML::Value << YAML::Flow << deg;
  e << YAML::Key << "z_center" << YAML::Value << c.anchors.z_center;
  e << YAML::EndMap;

  e << YAML::Key << "net" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "width" << YAML::Value << c.net_width;
  e << YAML::Key << "encoder_channels" << YAML::Value << c.net.encoder_channels;
  e << YAML::Key << "batchnorm" << YAML::Value << c.net.batchnorm;
  e << YAML::Key << "bn_momentum" << YAML::Value << c.net.bn_momentum;
  e << YAML::Key << "cls_prior" << YAML::Value << c.net.cls_prior;
  e << YAML::EndMap;

  e << YAML::Key << "targets" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "pos_iou" << YAML::Value << c.pos_iou;
  e << YAML::Key << "neg_iou" << YAML::Value << c.neg_iou;
  e << YAML::EndMap;

  e << YAML::Key << "loss" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "gamma" << YAML::Value << c.loss.gamma;
  e << YAML::Key << "sigma" << YAML::Value << c.loss.sigma;
  e << YAML::Key << "ohem_keep" << YAML::Value << c.loss.ohem_keep;
  e << YAML::Key << "eps" << YAML::Value << c.loss.eps;
  e << YAML::EndMap;

  e << YAML::Key << "refiner" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "feature_channels" << YAML::Value << c.refiner.feature_channels;
  e << YAML::Key << "coord_channels" << YAML::Value << c.refiner.coord_channels;
  e << YAML::Key << "pointnet" << YAML::Value << YAML::Flow << c.refiner.pointnet;
  e << YAML::Key << "head" << YAML::Value << YAML::Flow << c.refiner.head;
  e << YAML::Key << "attention" << YAML::Value << attention_name(c.refiner.attention);
  e << YAML::Key << "proposal_iou" << YAML::Value << c.refiner_train.proposal_iou;
  e << YAML::Key << "max_proposals" << YAML::Value << c.refiner_train.max_proposals;
  e << YAML::Key << "max_points" << YAML::Value << c.refiner_train.max_points;
  e << YAML::Key << "margin" << YAML::Value << c.refiner_train.margin;
  e << YAML::Key << "margin_mode" << YAML::Value
    << (c.refiner_train.margin_mode == MarginMode::kAllFaces ? "all" : "bev");
  e << YAML::EndMap;

  e << YAML::Key << "postprocess" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "score_thresh" << YAML::Value << c.post.score_thresh;
  e << YAML::Key << "nms_iou" << YAML::Value << c.post.nms_iou;
  e << YAML::Key << "top_k" << YAML::Value << c.post.top_k;
  e << YAML::EndMap;

  e << YAML::Key << "augment" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "enabled" << YAML::Value << c.augment_enabled;
  e << YAML::Key << "mixup" << YAML::Value << c.augment.mixup;
  e << YAML::Key << "mixup_objects" << YAML::Value << c.augment.mixup_objects;
  e << YAML::Key << "global" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "enabled" << YAML::Value << c.augment.global;
  e << YAML::Key << "flip_prob" << YAML::Value << c.augment.global_params.flip_prob;
  e << YAML::Key << "scale" << YAML::Value << YAML::Flow
    << std::vector<double>{c.augment.global_params.scale_min, c.augment.global_params.scale_max};
  e << YAML::Key << "rotation_deg" << YAML::Value << c.augment.global_params.rotation_max / kDeg;
  e << YAML::EndMap;
  e << YAML::Key << "perturb" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "enabled" << YAML::Value << c.augment.perturb;
  e << YAML::Key << "sigma_xy" << YAML::Value << c.augment.perturb_params.sigma_xy;
  e << YAML::Key << "sigma_z" << YAML::Value << c.augment.perturb_params.sigma_z;
  e << YAML::Key << "rotation_deg" << YAML::Value << c.augment.perturb_params.rotation_max / kDeg;
  e << YAML::Key << "max_tries" << YAML::Value << c.augment.perturb_params.max_tries;
  e << YAML::EndMap;
  e << YAML::EndMap;

  e << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
  for (auto [name, s] : {std::pair{"rpn", &c.rpn_schedule}, std::pair{"refiner", &c.refiner_schedule}}) {
    e << YAML::Key << name << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "epochs" << YAML::Value << s->epochs;
    e << YAML::Key << "lr" << YAML::Value << s->lr;
    e << YAML::Key << "lr_steps" << YAML::Value << YAML::Flow << s->lr_steps;
    e << YAML::Key << "lr_decay" << YAML::Value << s->lr_decay;
    e << YAML::Key << "weight_decay" << YAML::Value << s->weight_decay;
    e << YAML::Key << "frozen_norm_epochs" << YAML::Value << s->frozen_norm_epochs;
    e << YAML::EndMap;
  }
  e << YAML::EndMap;

  e << YAML::Key << "synthetic" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "scenes" << YAML::Value << c.synthetic.scenes;
  e << YAML::Key << "min_objects" << YAML::Value << c.synthetic.min_objects;
  e << YAML::Key << "max_objects" << YAML::Value << c.synthetic.max_objects;
  e << YAML::Key << "ground_z" << YAML::Value << c.synthetic.ground_z;
  e << YAML::Key << "surface_density" << YAML::Value << c.synthetic.surface_density;
  e << YAML::Key << "ground_points" << YAML::Value << c.synthetic.ground_points;
  e << YAML::Key << "clutter_points" << YAML::Value << c.synthetic.clutter_points;
  e << YAML::Key << "min_points" << YAML::Value << c.synthetic.min_points;
  e << YAML::EndMap;

  e << YAML::Key << "dataset" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "root" << YAML::Value << c.dataset_root.string();
  e << YAML::Key << "split" << YAML::Value << c.split;
  e << YAML::EndMap;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

}  // namespace fastpoint::pipeline
