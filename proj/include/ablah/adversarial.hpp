#pragma once

// One-step L2-normalised adversarial perturbation and the combined objective
// L_total = L + lambda * L_adv.

#include "ablah/model.hpp"

namespace ablah {

enum class PerturbationTarget { NodeEmbeddings, PathRepresentation, Logit };

enum class PerturbationNorm {
  Joint,      // one norm over every perturbed tensor of the instance
  PerTensor,  // each path's tensor normalised on its own
};

struct PerturbationConfig {
  double epsilon = 0.4;
  PerturbationTarget target = PerturbationTarget::NodeEmbeddings;
  double lambda = 1.0;
  PerturbationNorm norm = PerturbationNorm::Joint;
  bool positives_only = false;

  void validate() const;
};

// Δ = −ε g / ‖g‖₂, where g is the log-likelihood gradient; Δ = 0 when ‖g‖₂ < 1e-12.
Matrix compute_perturbation(const Matrix& grad_log_likelihood, double epsilon);

// Δ for every target tensor of `trace`. The tape must hold gradients of the
// clean loss (i.e. backward(clean_loss) has run); g is their negation.
Perturbation perturbation_from_trace(const Tape& tape, const ForwardTrace& trace, const PerturbationConfig& config);

double total_loss(double clean, double adversarial, double lambda);

struct Objective {
  Var clean_loss;
  Var adversarial_loss;  // invalid when the adversarial term is skipped
  Var total;
  Perturbation delta;
};

// Clean forward and loss; then, unless lambda is 0 (or the label is negative
// with positives_only), a backward pass for Δ and a perturbed forward. Δ is a
// constant in the perturbed pass. When `fixed_delta` is given it is used
// instead of being derived. Gradients left on the tape are stale; call
// tape.backward(result.total) next.
Objective training_objective(Tape& tape, const BoundParams& params, const ModelConfig& model,
                             const PerturbationConfig& adv, const PathSet& paths, int label,
                             const ForwardOptions& options = {}, const Perturbation* fixed_delta = nullptr);

// −log p(y | s_ui + Δ) on evaluation-mode passes.
double adversarial_loss(const ModelParams& params, const ModelConfig& model, const PerturbationConfig& adv,
                        const PathSet& paths, int label);

}  // namespace ablah
