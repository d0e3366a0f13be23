#pragma once

#include <functional>
#include <vector>

#include "catpose/attention.hpp"
#include "catpose/encoder.hpp"
#include "catpose/geometry.hpp"
#include "catpose/nn.hpp"

namespace catpose {

struct DeformLossWeights {
  double lambda_cd = 3.0;
  double lambda_lpc = 0.1;
  double lambda_nc = 0.01;
};

struct DeformLossBreakdown {
  double cd = 0.0;
  double lpc = 0.0;
  double nc = 0.0;
  double total = 0.0;
};

struct DeformationResult {
  MatX3 offsets;              // per-vertex displacement in the normalized frame
  TriangleMesh deformed_mesh; // template connectivity, displaced vertices
  DeformLossBreakdown loss_breakdown;
};

struct DeformNetConfig {
  EncoderConfig encoder;
  AttentionConfig attention;
  std::vector<int> decoder_hidden{512, 256};
  bool use_cross_enhance = true;  // the multi-scale geometry enhancement
  int n_samples = 2048;           // surface samples for the shape loss
  ChamferReduction chamfer_reduction = ChamferReduction::Mean;
};

struct DeformTrainConfig {
  int epochs = 50;
  double lr = 1e-4;
  int halve_every = 10;
};

// Regresses per-vertex offsets taking the template mesh to the observed
// instance's shape while staying in the template's normalized pose and scale.
// The feature path is shift/scale invariant, so transformed scene inputs
// produce the same offsets.
class DeformNet {
 public:
  DeformNet(const DeformNetConfig& cfg, uint64_t seed);

  struct Forward {
    ad::Var offsets;            // Nv x 3
    ad::Var deformed_vertices;  // Nv x 3
  };

  // Differentiable forward pass (training path).
  Forward forward(const TriangleMesh& template_mesh, const PointCloud& scene) const;

  // Value-level deformation (inference path).
  DeformationResult deform(const TriangleMesh& template_mesh, const PointCloud& scene) const;

  struct LossVars {
    ad::Var cd, lpc, nc, total;
    DeformLossBreakdown values() const;
  };

  // Shape + smoothness regularizers against the coarse target cloud, which
  // must live in the template's normalized frame.
  LossVars deformation_loss(const Forward& fwd, const TriangleMesh& template_mesh,
                            const PointCloud& coarse_target, const DeformLossWeights& w,
                            int n_samples, uint64_t seed) const;

  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  const DeformNetConfig& config() const { return cfg_; }

 private:
  DeformNetConfig cfg_;
  nn::ParamStore store_;
  InvariantEncoder encoder_;
  CrossEnhancer enhancer_;
  nn::Mlp decoder_;
};

struct DeformSample {
  TriangleMesh template_mesh;
  PointCloud scene;
  PointCloud coarse_target;
};

struct TrainCurve {
  std::vector<double> epoch_loss;  // mean total loss per epoch
};

// Two-stage schedule, stage one: Adam over the deformation loss, learning
// rate halved every `halve_every` epochs. Deterministic per seed.
TrainCurve train_deformation(DeformNet& net, const std::vector<DeformSample>& dataset,
                             const DeformTrainConfig& tcfg, const DeformLossWeights& weights,
                             uint64_t seed, nn::Adam* optimizer = nullptr, int start_epoch = 0,
                             const std::function<void(int, double)>& on_epoch = nullptr);

}  // namespace catpose
