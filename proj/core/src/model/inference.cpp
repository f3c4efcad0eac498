#include "prada/model/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "prada/util/error.hpp"

namespace prada::model {
namespace {

constexpr const char* kLayerFields[] = {"ln1.g",     "ln1.b", "attn.w_qkv", "attn.b_qkv", "attn.w_out", "attn.b_out",
                                        "ln2.g",     "ln2.b", "mlp.w_in",   "mlp.b_in",   "mlp.w_out",  "mlp.b_out"};

void layer_norm_row(const double* x, const double* g, const double* b, double* out, std::size_t n) {
  double mean = 0.0;
  for (std::size_t j = 0; j < n; ++j) mean += x[j];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t j = 0; j < n; ++j) var += (x[j] - mean) * (x[j] - mean);
  var /= static_cast<double>(n);
  const double is = 1.0 / std::sqrt(var + ad::kLayerNormEps);
  for (std::size_t j = 0; j < n; ++j) out[j] = g[j] * ((x[j] - mean) * is) + b[j];
}

// out = x W + b for a single row.
void affine_row(const double* x, const ad::Tensor& w, const ad::Tensor& b, double* out) {
  const std::size_t k = w.rows(), n = w.cols();
  std::fill(out, out + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double a = x[p];
    const double* wr = w.raw() + p * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += a * wr[j];
  }
  for (std::size_t j = 0; j < n; ++j) out[j] += b[j];
}

double gelu(double v) {
  const double u = 0.7978845608028654 * (v + 0.044715 * v * v * v);
  return 0.5 * v * (1.0 + std::tanh(u));
}

}  // namespace

InferenceSession::InferenceSession(const StudentModel& model) : model_(&model), config_(&model.config()) {
  keys_.resize(config_->layers);
  values_.resize(config_->layers);
  tok_emb_ = &model.parameter("tok_emb").value;
  pos_emb_ = &model.parameter("pos_emb").value;
  for (std::size_t l = 0; l < config_->layers; ++l) {
    for (const char* f : kLayerFields) layer_params_.push_back(&model.parameter(StudentModel::layer_param(l, f)).value);
  }
  if (config_->prompt_len > 0) {
    for (std::size_t l = 0; l < config_->prompt_banks(); ++l) {
      banks_.push_back(&model.parameter(StudentModel::prompt_bank(l)).value);
    }
  }
}

void InferenceSession::push(const std::vector<double>& embedded) {
  const ModelConfig& c = *config_;
  const std::size_t h = c.hidden, d = c.head_dim(), f = c.mlp_ratio * h;
  const std::size_t pos = length_;
  if (pos >= c.max_seq) throw LengthError("inference: sequence reached max_seq " + std::to_string(c.max_seq));
  const bool prompt_slot = pos < c.prompt_len;

  std::vector<double> x(h), hn(h), qkv(3 * h), att(h), tmp(h), mid(f), scores;
  for (std::size_t j = 0; j < h; ++j) x[j] = embedded[j] + pos_emb_->at(pos, j);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  for (std::size_t l = 0; l < c.layers; ++l) {
    const ad::Tensor* const* P = layer_params_.data() + l * 12;
    if (l > 0 && prompt_slot) std::copy_n(banks_[l]->raw() + pos * h, h, x.data());
    layer_norm_row(x.data(), P[0]->raw(), P[1]->raw(), hn.data(), h);
    affine_row(hn.data(), *P[2], *P[3], qkv.data());
    keys_[l].insert(keys_[l].end(), qkv.begin() + h, qkv.begin() + 2 * h);
    values_[l].insert(values_[l].end(), qkv.begin() + 2 * h, qkv.end());
    std::fill(att.begin(), att.end(), 0.0);
    scores.resize(pos + 1);
    for (std::size_t head = 0; head < c.heads; ++head) {
      const double* q = qkv.data() + head * d;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j <= pos; ++j) {
        const double* kj = keys_[l].data() + j * h + head * d;
        double s = 0.0;
        for (std::size_t t = 0; t < d; ++t) s += q[t] * kj[t];
        scores[j] = s * scale;
        mx = std::max(mx, scores[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j <= pos; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        z += scores[j];
      }
      const double inv = 1.0 / z;
      double* out = att.data() + head * d;
      for (std::size_t j = 0; j <= pos; ++j) {
        const double p = scores[j] * inv;
        const double* vj = values_[l].data() + j * h + head * d;
        for (std::size_t t = 0; t < d; ++t) out[t] += p * vj[t];
      }
    }
    affine_row(att.data(), *P[4], *P[5], tmp.data());
    for (std::size_t j = 0; j < h; ++j) x[j] += tmp[j];
    layer_norm_row(x.data(), P[6]->raw(), P[7]->raw(), hn.data(), h);
    affine_row(hn.data(), *P[8], *P[9], mid.data());
    for (double& v : mid) v = gelu(v);
    affine_row(mid.data(), *P[10], *P[11], tmp.data());
    for (std::size_t j = 0; j < h; ++j) x[j] += tmp[j];
  }
  last_features_ = std::move(x);
  ++length_;
}

std::vector<double> InferenceSession::logits() const {
  const ModelConfig& c = *config_;
  std::vector<double> hn(c.hidden), out(c.vocab_size);
  layer_norm_row(last_features_.data(), model_->parameter("lm.ln.g").value.raw(),
                 model_->parameter("lm.ln.b").value.raw(), hn.data(), c.hidden);
  affine_row(hn.data(), model_->parameter("lm.w").value, model_->parameter("lm.b").value, out.data());
  return out;
}

std::vector<double> InferenceSession::start(const std::vector<std::size_t>& tokens) {
  if (length_ != 0) throw ContractError("InferenceSession::start called twice");
  if (tokens.empty()) throw DataError("inference: empty prefix");
  const std::size_t h = config_->hidden;
  std::vector<double> e(h);
  for (std::size_t j = 0; j < config_->prompt_len; ++j) {
    std::copy_n(banks_[0]->raw() + j * h, h, e.data());
    push(e);
  }
  for (std::size_t t : tokens) {
    std::copy_n(tok_emb_->raw() + t * h, h, e.data());
    push(e);
  }
  return logits();
}

std::vector<double> InferenceSession::append(std::size_t token) {
  const std::size_t h = config_->hidden;
  if (token >= config_->vocab_size) throw DataError("inference: token outside vocabulary");
  std::vector<double> e(tok_emb_->raw() + token * h, tok_emb_->raw() + (token + 1) * h);
  push(e);
  return logits();
}

}  // namespace prada::model
