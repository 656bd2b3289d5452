#include "ablah/adversarial.hpp"

#include <cmath>

namespace ablah {

void PerturbationConfig::validate() const {
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be non-negative");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
}

Matrix compute_perturbation(const Matrix& grad_log_likelihood, double epsilon) {
  const double norm = grad_log_likelihood.norm();
  if (norm < 1e-12 || epsilon == 0.0) return Matrix::Zero(grad_log_likelihood.rows(), grad_log_likelihood.cols());
  return grad_log_likelihood * (-epsilon / norm);
}

namespace {

// Stacks the columns of every block into one vector, normalises jointly, and
// splits the result back into blocks of the original shapes.
std::vector<Matrix> joint_perturbation(const std::vector<Matrix>& grads, double epsilon) {
  Eigen::Index total = 0;
  for (const Matrix& g : grads) total += g.size();
  Matrix flat(total, 1);
  Eigen::Index off = 0;
  for (const Matrix& g : grads) {
    flat.middleRows(off, g.size()) = g.reshaped(g.size(), 1);
    off += g.size();
  }
  const Matrix delta = compute_perturbation(flat, epsilon);
  std::vector<Matrix> out;
  off = 0;
  for (const Matrix& g : grads) {
    out.emplace_back(delta.middleRows(off, g.size()).reshaped(g.rows(), g.cols()));
    off += g.size();
  }
  return out;
}

std::vector<Matrix> normalise(const std::vector<Matrix>& grads, const PerturbationConfig& config) {
  if (config.norm == PerturbationNorm::Joint) return joint_perturbation(grads, config.epsilon);
  std::vector<Matrix> out;
  for (const Matrix& g : grads) out.push_back(compute_perturbation(g, config.epsilon));
  return out;
}

}  // namespace

Perturbation perturbation_from_trace(const Tape& tape, const ForwardTrace& trace, const PerturbationConfig& config) {
  Perturbation delta;
  switch (config.target) {
    case PerturbationTarget::NodeEmbeddings: {
      std::vector<Matrix> grads;
      for (const PathTrace& pt : trace.paths) {
        Matrix g(pt.embeddings.front().rows(), static_cast<Eigen::Index>(pt.embeddings.size()));
        for (std::size_t l = 0; l < pt.embeddings.size(); ++l) {
          g.col(static_cast<Eigen::Index>(l)) = -tape.grad(pt.embeddings[l]);
        }
        grads.push_back(std::move(g));
      }
      delta.node_embeddings = normalise(grads, config);
      break;
    }
    case PerturbationTarget::PathRepresentation: {
      std::vector<Matrix> grads;
      for (const PathTrace& pt : trace.paths) grads.push_back(-tape.grad(pt.representation));
      delta.path_representations = normalise(grads, config);
      break;
    }
    case PerturbationTarget::Logit:
      delta.logit = compute_perturbation(-tape.grad(trace.logit), config.epsilon)(0, 0);
      break;
  }
  return delta;
}

double total_loss(double clean, double adversarial, double lambda) {
  if (lambda == 0.0) return clean;
  return clean + lambda * adversarial;
}

Objective training_objective(Tape& tape, const BoundParams& params, const ModelConfig& model,
                             const PerturbationConfig& adv, const PathSet& paths, int label,
                             const ForwardOptions& options, const Perturbation* fixed_delta) {
  Objective out;
  ForwardOptions clean_options = options;
  clean_options.perturbation = nullptr;
  ForwardTrace clean = forward(params, model, paths, clean_options);
  out.clean_loss = loss(clean.output, label);
  out.total = out.clean_loss;
  if (adv.lambda == 0.0 || (adv.positives_only && label == 0)) return out;

  if (fixed_delta) {
    out.delta = *fixed_delta;
  } else {
    tape.backward(out.clean_loss);
    out.delta = perturbation_from_trace(tape, clean, adv);
    tape.zero_grad();
  }
  ForwardOptions perturbed_options = options;
  perturbed_options.perturbation = &out.delta;
  ForwardTrace perturbed = forward(params, model, paths, perturbed_options);
  out.adversarial_loss = loss(perturbed.output, label);
  out.total = out.clean_loss + ad::scale(out.adversarial_loss, adv.lambda);
  return out;
}

double adversarial_loss(const ModelParams& params, const ModelConfig& model, const PerturbationConfig& adv,
                        const PathSet& paths, int label) {
  Tape tape;
  BoundParams b = bind(tape, params);
  PerturbationConfig always = adv;
  always.lambda = 1.0;
  always.positives_only = false;
  Objective obj = training_objective(tape, b, model, always, paths, label);
  return obj.adversarial_loss.scalar();
}

}  // namespace ablah
