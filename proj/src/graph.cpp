#include "geoadapt/graph.hpp"

#include <Eigen/Core>

#include <cmath>

namespace geoadapt {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat, Eigen::Aligned64>;
using CMapMat = Eigen::Map<const RowMat, Eigen::Aligned64>;
using MapVec = Eigen::Map<Eigen::VectorXd, Eigen::Aligned64>;
using CMapVec = Eigen::Map<const Eigen::VectorXd, Eigen::Aligned64>;

CMapMat cmat(const Tensor& t) {
  return CMapMat(t.data(), static_cast<Eigen::Index>(t.rows()),
                 static_cast<Eigen::Index>(t.cols()));
}
MapMat mat(Tensor& t) {
  return MapMat(t.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}
CMapVec cvec(const Tensor& t) {
  return CMapVec(t.data(), static_cast<Eigen::Index>(t.numel()));
}
MapVec vec(Tensor& t) { return MapVec(t.data(), static_cast<Eigen::Index>(t.numel())); }

constexpr double kLnEps = 1e-30;

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }
double gelu_deriv(double x) {
  const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * phi;
}

}  // namespace

void softmax_rows_inplace(Tensor& t) {
  const size_t n = t.rows(), d = t.cols();
  for (size_t i = 0; i < n; ++i) {
    double* row = t.data() + i * d;
    double m = row[0];
    for (size_t j = 1; j < d; ++j) m = std::max(m, row[j]);
    double sum = 0.0;
    for (size_t j = 0; j < d; ++j) {
      row[j] = std::exp(row[j] - m);
      sum += row[j];
    }
    for (size_t j = 0; j < d; ++j) row[j] /= sum;
  }
}

int Graph::push(Node n) {
  if (consumed_)
    throw NumericError("graph: forward op '" + n.label + "' recorded on a consumed tape");
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Graph::check_finite(const Tensor& t, const std::string& label, const char* what) const {
  if (!t.all_finite())
    throw NumericError("non-finite " + std::string(what) + " in layer '" + label + "'");
}

ValueRef Graph::constant(Tensor t, std::string label) {
  Node n;
  n.op = Op::Constant;
  n.label = std::move(label);
  check_finite(t, n.label, "input");
  n.value = std::move(t);
  return {push(std::move(n))};
}

ValueRef Graph::param(ParamTensor& p) {
  auto it = param_index_.find(&p);
  if (it != param_index_.end()) return {it->second};
  Node n;
  n.op = Op::Param;
  n.label = p.name;
  n.bound = &p;
  n.value = p.value;
  check_finite(n.value, n.label, "parameter value");
  int id = push(std::move(n));
  param_index_[&p] = id;
  param_leaves_.push_back(id);
  return {id};
}

ValueRef Graph::affine(ValueRef x, ParamTensor& w, ParamTensor& b, const std::string& label) {
  const Tensor& xv = value(x);
  if (xv.rank() != 2 || w.value.rank() != 2 || xv.cols() != w.value.cols())
    throw DimensionError("affine '" + label + "': x " + xv.shape_str() + " vs W " +
                         w.value.shape_str());
  if (b.value.numel() != w.value.rows())
    throw DimensionError("affine '" + label + "': bias length mismatch");
  ValueRef wr = param(w), br = param(b);
  Node n;
  n.op = Op::Affine;
  n.label = label;
  n.inputs = {x.id, wr.id, br.id};
  n.value = Tensor({xv.rows(), w.value.rows()});
  mat(n.value).noalias() = cmat(xv) * cmat(w.value).transpose();
  mat(n.value).rowwise() += cvec(b.value).transpose();
  check_finite(n.value, label, "output");
  return {push(std::move(n))};
}

ValueRef Graph::layer_norm(ValueRef x, ParamTensor& gain, ParamTensor& bias,
                           const std::string& label) {
  const Tensor& xv = value(x);
  if (xv.rank() != 2) throw DimensionError("layer_norm '" + label + "': expects [n, d]");
  const size_t d = xv.cols();
  if (gain.value.numel() != d || bias.value.numel() != d)
    throw DimensionError("layer_norm '" + label + "': gain/bias length mismatch");
  ValueRef gr = param(gain), br = param(bias);
  Node n;
  n.op = Op::LayerNorm;
  n.label = label;
  n.inputs = {x.id, gr.id, br.id};
  n.value = Tensor(xv.shape());
  Tensor xhat(xv.shape());
  Tensor inv_sigma({xv.rows()});
  for (size_t i = 0; i < xv.rows(); ++i) {
    const double* row = xv.data() + i * d;
    double mu = 0.0;
    for (size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    inv_sigma[i] = inv;
    for (size_t j = 0; j < d; ++j) {
      double h = (row[j] - mu) * inv;
      xhat[i * d + j] = h;
      n.value[i * d + j] = h * gain.value[j] + bias.value[j];
    }
  }
  check_finite(n.value, label, "output");
  n.saved.push_back(std::move(xhat));
  n.saved.push_back(std::move(inv_sigma));
  return {push(std::move(n))};
}

ValueRef Graph::mha(ValueRef xq, ValueRef xkv, ParamTensor& wq, ParamTensor& bq, ParamTensor& wk,
                    ParamTensor& bk, ParamTensor& wv, ParamTensor& bv, ParamTensor& wo,
                    ParamTensor& bo, int n_heads, const std::string& label) {
  const Tensor& q_in = value(xq);
  const Tensor& kv_in = value(xkv);
  if (q_in.rank() != 2 || kv_in.rank() != 2 || q_in.cols() != kv_in.cols())
    throw DimensionError("mha '" + label + "': query/key dims disagree");
  const size_t d = q_in.cols();
  if (n_heads < 1 || d % static_cast<size_t>(n_heads) != 0)
    throw DimensionError("mha '" + label + "': d_model not divisible by head count");
  for (const ParamTensor* w : {&wq, &wk, &wv, &wo})
    if (w->value.rank() != 2 || w->value.rows() != d || w->value.cols() != d)
      throw DimensionError("mha '" + label + "': projection must be [d, d]");
  const size_t dh = d / static_cast<size_t>(n_heads);
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const size_t nq = q_in.rows(), nkv = kv_in.rows();

  ValueRef pwq = param(wq), pbq = param(bq), pwk = param(wk), pbk = param(bk);
  ValueRef pwv = param(wv), pbv = param(bv), pwo = param(wo), pbo = param(bo);

  Node n;
  n.op = Op::Mha;
  n.label = label;
  n.heads = n_heads;
  n.scalar_arg = att_scale;
  n.inputs = {xq.id, xkv.id, pwq.id, pbq.id, pwk.id, pbk.id, pwv.id, pbv.id, pwo.id, pbo.id};

  Tensor q({nq, d}), k({nkv, d}), v({nkv, d}), o({nq, d});
  mat(q).noalias() = cmat(q_in) * cmat(wq.value).transpose();
  mat(q).rowwise() += cvec(bq.value).transpose();
  mat(k).noalias() = cmat(kv_in) * cmat(wk.value).transpose();
  mat(k).rowwise() += cvec(bk.value).transpose();
  mat(v).noalias() = cmat(kv_in) * cmat(wv.value).transpose();
  mat(v).rowwise() += cvec(bv.value).transpose();

  std::vector<Tensor> probs;
  probs.reserve(static_cast<size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    const auto qh = cmat(q).middleCols(static_cast<Eigen::Index>(h * dh), dh);
    const auto kh = cmat(k).middleCols(static_cast<Eigen::Index>(h * dh), dh);
    const auto vh = cmat(v).middleCols(static_cast<Eigen::Index>(h * dh), dh);
    Tensor p({nq, nkv});
    mat(p).noalias() = qh * kh.transpose() * att_scale;
    softmax_rows_inplace(p);
    mat(o).middleCols(static_cast<Eigen::Index>(h * dh), dh).noalias() = cmat(p) * vh;
    probs.push_back(std::move(p));
  }

  n.value = Tensor({nq, d});
  mat(n.value).noalias() = cmat(o) * cmat(wo.value).transpose();
  mat(n.value).rowwise() += cvec(bo.value).transpose();
  check_finite(n.value, label, "output");

  n.saved.push_back(std::move(q));
  n.saved.push_back(std::move(k));
  n.saved.push_back(std::move(v));
  n.saved.push_back(std::move(o));
  for (auto& p : probs) n.saved.push_back(std::move(p));
  return {push(std::move(n))};
}

ValueRef Graph::mha_preprojected(ValueRef q, ValueRef k, ValueRef v, int n_heads,
                                 const std::string& label) {
  const Tensor& qv = value(q);
  const Tensor& kv = value(k);
  const Tensor& vv = value(v);
  if (qv.rank() != 2 || kv.rank() != 2 || vv.rank() != 2 || qv.cols() != kv.cols() ||
      kv.cols() != vv.cols() || kv.rows() != vv.rows())
    throw DimensionError("mha_core '" + label + "': inconsistent q/k/v shapes");
  const size_t d = qv.cols();
  if (n_heads < 1 || d % static_cast<size_t>(n_heads) != 0)
    throw DimensionError("mha_core '" + label + "': d not divisible by head count");
  const size_t dh = d / static_cast<size_t>(n_heads);
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const size_t nq = qv.rows(), nkv = kv.rows();

  Node n;
  n.op = Op::MhaCore;
  n.label = label;
  n.heads = n_heads;
  n.scalar_arg = att_scale;
  n.inputs = {q.id, k.id, v.id};
  n.value = Tensor({nq, d});
  std::vector<Tensor> probs;
  probs.reserve(static_cast<size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    const Eigen::Index off = static_cast<Eigen::Index>(h * dh);
    const auto qh = cmat(qv).middleCols(off, dh);
    const auto kh = cmat(kv).middleCols(off, dh);
    const auto vh = cmat(vv).middleCols(off, dh);
    Tensor p({nq, nkv});
    mat(p).noalias() = qh * kh.transpose() * att_scale;
    softmax_rows_inplace(p);
    mat(n.value).middleCols(off, dh).noalias() = cmat(p) * vh;
    probs.push_back(std::move(p));
  }
  check_finite(n.value, label, "output");
  for (auto& p : probs) n.saved.push_back(std::move(p));
  return {push(std::move(n))};
}

ValueRef Graph::gelu(ValueRef x, const std::string& label) {
  const Tensor& xv = value(x);
  Node n;
  n.op = Op::Gelu;
  n.label = label;
  n.inputs = {x.id};
  n.value = Tensor(xv.shape());
  for (size_t i = 0; i < xv.numel(); ++i) n.value[i] = gelu_scalar(xv[i]);
  check_finite(n.value, label, "output");
  return {push(std::move(n))};
}

ValueRef Graph::gelu_mlp(ValueRef x, ParamTensor& w_in, ParamTensor& b_in, ParamTensor& w_out,
                         ParamTensor& b_out, const std::string& label) {
  ValueRef h = affine(x, w_in, b_in, label + ".in");
  ValueRef g = gelu(h, label + ".gelu");
  return affine(g, w_out, b_out, label + ".out");
}

ValueRef Graph::add(ValueRef a, ValueRef b, const std::string& label) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv))
    throw DimensionError("add '" + label + "': " + av.shape_str() + " vs " + bv.shape_str());
  Node n;
  n.op = Op::Add;
  n.label = label;
  n.inputs = {a.id, b.id};
  n.value = Tensor(av.shape());
  for (size_t i = 0; i < av.numel(); ++i) n.value[i] = av[i] + bv[i];
  check_finite(n.value, label, "output");
  return {push(std::move(n))};
}

ValueRef Graph::scale(ValueRef x, double factor, const std::string& label) {
  const Tensor& xv = value(x);
  Node n;
  n.op = Op::Scale;
  n.label = label;
  n.scalar_arg = factor;
  n.inputs = {x.id};
  n.value = Tensor(xv.shape());
  for (size_t i = 0; i < xv.numel(); ++i) n.value[i] = factor * xv[i];
  check_finite(n.value, label, "output");
  return {push(std::move(n))};
}

ValueRef Graph::lora_affine(ValueRef x, ParamTensor& w0, ParamTensor& b, ParamTensor& a,
                            ParamTensor& bmat, double alpha, int rank,
                            const std::string& label) {
  const Tensor& xv = value(x);
  const size_t d_in = w0.value.cols(), d_out = w0.value.rows();
  const size_t r = static_cast<size_t>(rank);
  if (rank < 1 || r > std::min(d_in, d_out))
    throw ConfigError("lora '" + label + "': rank " + std::to_string(rank) +
                      " exceeds min(d_in, d_out)");
  if (a.value.rows() != r || a.value.cols() != d_in || bmat.value.rows() != d_out ||
      bmat.value.cols() != r)
    throw DimensionError("lora '" + label + "': adapter shapes inconsistent with base layer");
  if (xv.cols() != d_in) throw DimensionError("lora '" + label + "': input dim mismatch");
  ValueRef pw = param(w0), pb = param(b), pa = param(a), pbm = param(bmat);
  Node n;
  n.op = Op::LoraAffine;
  n.label = label;
  n.scalar_arg = alpha / static_cast<double>(rank);
  n.inputs = {x.id, pw.id, pb.id, pa.id, pbm.id};
  Tensor u({xv.rows(), r});
  mat(u).noalias() = cmat(xv) * cmat(a.value).transpose();
  n.value = Tensor({xv.rows(), d_out});
  mat(n.value).noalias() = cmat(xv) * cmat(w0.value).transpose();
  mat(n.value).rowwise() += cvec(b.value).transpose();
  mat(n.value).noalias() += n.scalar_arg * (cmat(u) * cmat(bmat.value).transpose());
  check_finite(n.value, label, "output");
  n.saved.push_back(std::move(u));
  return {push(std::move(n))};
}

ValueRef Graph::mse(ValueRef pred, const Tensor& target, const std::string& label) {
  const Tensor& pv = value(pred);
  if (!pv.same_shape(target))
    throw DimensionError("mse '" + label + "': prediction/target shape mismatch");
  Node n;
  n.op = Op::Mse;
  n.label = label;
  n.inputs = {pred.id};
  n.target = target;
  double acc = 0.0;
  for (size_t i = 0; i < pv.numel(); ++i) {
    const double e = pv[i] - target[i];
    acc += e * e;
  }
  n.value = Tensor::scalar(acc / static_cast<double>(pv.numel()));
  check_finite(n.value, label, "output");
  return {push(std::move(n))};
}

const Tensor& Graph::value(ValueRef v) const {
  if (!v.valid() || static_cast<size_t>(v.id) >= nodes_.size())
    throw ConfigError("graph: invalid value reference");
  return nodes_[static_cast<size_t>(v.id)].value;
}

Tensor Graph::grad_of(ValueRef v) const {
  const Node& n = nodes_.at(static_cast<size_t>(v.id));
  if (n.grad_live) return n.grad;
  return Tensor(n.value.shape());
}

Tensor& Graph::grad_buf(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.grad_live) {
    n.grad = Tensor(n.value.shape());
    n.grad_live = true;
  }
  return n.grad;
}

void Graph::backward(ValueRef loss) {
  if (consumed_) throw NumericError("graph: backward called twice on a stale graph");
  consumed_ = true;
  const Tensor& lv = value(loss);
  if (lv.numel() != 1) throw DimensionError("backward: loss must be scalar");
  grad_buf(loss.id).fill(1.0);

  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.grad_live) continue;
    switch (n.op) {
      case Op::Constant:
      case Op::Param:
        break;
      case Op::Affine:
        backward_affine(n);
        break;
      case Op::LayerNorm:
        backward_layer_norm(n);
        break;
      case Op::Mha:
        backward_mha(n);
        break;
      case Op::MhaCore:
        backward_mha_core(n);
        break;
      case Op::Gelu:
        backward_gelu(n);
        break;
      case Op::Add: {
        for (int in : n.inputs) {
          Tensor& g = grad_buf(in);
          for (size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
        }
        break;
      }
      case Op::Scale: {
        Tensor& g = grad_buf(n.inputs[0]);
        for (size_t i = 0; i < g.numel(); ++i) g[i] += n.scalar_arg * n.grad[i];
        break;
      }
      case Op::LoraAffine:
        backward_lora(n);
        break;
      case Op::Mse: {
        const Tensor& pv = nodes_[static_cast<size_t>(n.inputs[0])].value;
        Tensor& g = grad_buf(n.inputs[0]);
        const double s = 2.0 * n.grad[0] / static_cast<double>(pv.numel());
        for (size_t i = 0; i < pv.numel(); ++i) g[i] += s * (pv[i] - n.target[i]);
        break;
      }
    }
    if (!n.inputs.empty()) {
      for (int in : n.inputs) {
        const Node& m = nodes_[static_cast<size_t>(in)];
        if (m.grad_live) check_finite(m.grad, m.label, "gradient");
      }
    }
  }
}

void Graph::backward_affine(Node& n) {
  const Tensor& xv = nodes_[static_cast<size_t>(n.inputs[0])].value;
  const Tensor& wv = nodes_[static_cast<size_t>(n.inputs[1])].value;
  Tensor& dx = grad_buf(n.inputs[0]);
  Tensor& dw = grad_buf(n.inputs[1]);
  Tensor& db = grad_buf(n.inputs[2]);
  mat(dx).noalias() += cmat(n.grad) * cmat(wv);
  mat(dw).noalias() += cmat(n.grad).transpose() * cmat(xv);
  vec(db) += cmat(n.grad).colwise().sum().transpose();
}

void Graph::backward_layer_norm(Node& n) {
  const Tensor& xhat = n.saved[0];
  const Tensor& inv_sigma = n.saved[1];
  const Tensor& gain = nodes_[static_cast<size_t>(n.inputs[1])].value;
  Tensor& dx = grad_buf(n.inputs[0]);
  Tensor& dgain = grad_buf(n.inputs[1]);
  Tensor& dbias = grad_buf(n.inputs[2]);
  const size_t rows = xhat.rows(), d = xhat.cols();
  const double invd = 1.0 / static_cast<double>(d);
  for (size_t i = 0; i < rows; ++i) {
    const double* dy = n.grad.data() + i * d;
    const double* xh = xhat.data() + i * d;
    double sum_dh = 0.0, sum_dh_xh = 0.0;
    for (size_t j = 0; j < d; ++j) {
      const double dh = dy[j] * gain[j];
      sum_dh += dh;
      sum_dh_xh += dh * xh[j];
      dgain[j] += dy[j] * xh[j];
      dbias[j] += dy[j];
    }
    const double inv = inv_sigma[i];
    double* dxr = dx.data() + i * d;
    for (size_t j = 0; j < d; ++j) {
      const double dh = dy[j] * gain[j];
      dxr[j] += inv * (dh - invd * sum_dh - xh[j] * invd * sum_dh_xh);
    }
  }
}

void Graph::backward_mha(Node& n) {
  const Tensor& q_in = nodes_[static_cast<size_t>(n.inputs[0])].value;
  const Tensor& kv_in = nodes_[static_cast<size_t>(n.inputs[1])].value;
  const Tensor& wq = nodes_[static_cast<size_t>(n.inputs[2])].value;
  const Tensor& wk = nodes_[static_cast<size_t>(n.inputs[4])].value;
  const Tensor& wv = nodes_[static_cast<size_t>(n.inputs[6])].value;
  const Tensor& wo = nodes_[static_cast<size_t>(n.inputs[8])].value;
  const Tensor& q = n.saved[0];
  const Tensor& k = n.saved[1];
  const Tensor& v = n.saved[2];
  const Tensor& o = n.saved[3];
  const size_t d = q.cols(), nq = q.rows(), nkv = k.rows();
  const int heads = n.heads;
  const size_t dh = d / static_cast<size_t>(heads);
  const double att_scale = n.scalar_arg;

  Tensor d_o({nq, d}), d_q({nq, d}), d_k({nkv, d}), d_v({nkv, d});
  mat(d_o).noalias() = cmat(n.grad) * cmat(wo);
  {
    Tensor& dwo = grad_buf(n.inputs[8]);
    Tensor& dbo = grad_buf(n.inputs[9]);
    mat(dwo).noalias() += cmat(n.grad).transpose() * cmat(o);
    vec(dbo) += cmat(n.grad).colwise().sum().transpose();
  }

  for (int h = 0; h < heads; ++h) {
    const Eigen::Index off = static_cast<Eigen::Index>(h * dh);
    const Tensor& p = n.saved[4 + static_cast<size_t>(h)];
    const auto qh = cmat(q).middleCols(off, dh);
    const auto kh = cmat(k).middleCols(off, dh);
    const auto vh = cmat(v).middleCols(off, dh);
    const auto doh = cmat(d_o).middleCols(off, dh);

    RowMat dp(nq, nkv);
    dp.noalias() = doh * vh.transpose();
    mat(d_v).middleCols(off, dh).noalias() = cmat(p).transpose() * doh;

    // Softmax backward: dS = P .* (dP - rowsum(P .* dP)).
    RowMat ds = cmat(p).cwiseProduct(dp);
    Eigen::VectorXd rowsum = ds.rowwise().sum();
    ds.noalias() -= rowsum.asDiagonal() * cmat(p);
    ds *= att_scale;

    mat(d_q).middleCols(off, dh).noalias() = ds * kh;
    mat(d_k).middleCols(off, dh).noalias() = ds.transpose() * qh;
  }

  Tensor& dxq = grad_buf(n.inputs[0]);
  Tensor& dxkv = grad_buf(n.inputs[1]);
  Tensor& dwq = grad_buf(n.inputs[2]);
  Tensor& dbq = grad_buf(n.inputs[3]);
  Tensor& dwk = grad_buf(n.inputs[4]);
  Tensor& dbk = grad_buf(n.inputs[5]);
  Tensor& dwv = grad_buf(n.inputs[6]);
  Tensor& dbv = grad_buf(n.inputs[7]);

  mat(dxq).noalias() += cmat(d_q) * cmat(wq);
  mat(dwq).noalias() += cmat(d_q).transpose() * cmat(q_in);
  vec(dbq) += cmat(d_q).colwise().sum().transpose();

  mat(dxkv).noalias() += cmat(d_k) * cmat(wk);
  mat(dwk).noalias() += cmat(d_k).transpose() * cmat(kv_in);
  vec(dbk) += cmat(d_k).colwise().sum().transpose();

  mat(dxkv).noalias() += cmat(d_v) * cmat(wv);
  mat(dwv).noalias() += cmat(d_v).transpose() * cmat(kv_in);
  vec(dbv) += cmat(d_v).colwise().sum().transpose();
}

void Graph::backward_mha_core(Node& n) {
  const Tensor& qv = nodes_[static_cast<size_t>(n.inputs[0])].value;
  const Tensor& kv = nodes_[static_cast<size_t>(n.inputs[1])].value;
  const Tensor& vv = nodes_[static_cast<size_t>(n.inputs[2])].value;
  const size_t d = qv.cols(), nq = qv.rows(), nkv = kv.rows();
  const int heads = n.heads;
  const size_t dh = d / static_cast<size_t>(heads);
  const double att_scale = n.scalar_arg;

  Tensor& dq = grad_buf(n.inputs[0]);
  Tensor& dk = grad_buf(n.inputs[1]);
  Tensor& dv = grad_buf(n.inputs[2]);

  for (int h = 0; h < heads; ++h) {
    const Eigen::Index off = static_cast<Eigen::Index>(h * dh);
    const Tensor& p = n.saved[static_cast<size_t>(h)];
    const auto qh = cmat(qv).middleCols(off, dh);
    const auto kh = cmat(kv).middleCols(off, dh);
    const auto vh = cmat(vv).middleCols(off, dh);
    const auto doh = cmat(n.grad).middleCols(off, dh);

    RowMat dp(nq, nkv);
    dp.noalias() = doh * vh.transpose();
    mat(dv).middleCols(off, dh).noalias() += cmat(p).transpose() * doh;

    RowMat ds = cmat(p).cwiseProduct(dp);
    Eigen::VectorXd rowsum = ds.rowwise().sum();
    ds.noalias() -= rowsum.asDiagonal() * cmat(p);
    ds *= att_scale;

    mat(dq).middleCols(off, dh).noalias() += ds * kh;
    mat(dk).middleCols(off, dh).noalias() += ds.transpose() * qh;
  }
}

void Graph::backward_gelu(Node& n) {
  const Tensor& xv = nodes_[static_cast<size_t>(n.inputs[0])].value;
  Tensor& dx = grad_buf(n.inputs[0]);
  for (size_t i = 0; i < xv.numel(); ++i) dx[i] += n.grad[i] * gelu_deriv(xv[i]);
}

void Graph::backward_lora(Node& n) {
  const Tensor& xv = nodes_[static_cast<size_t>(n.inputs[0])].value;
  const Tensor& w0 = nodes_[static_cast<size_t>(n.inputs[1])].value;
  const Tensor& a = nodes_[static_cast<size_t>(n.inputs[3])].value;
  const Tensor& bm = nodes_[static_cast<size_t>(n.inputs[4])].value;
  const Tensor& u = n.saved[0];
  const double s = n.scalar_arg;

  Tensor& dx = grad_buf(n.inputs[0]);
  Tensor& da = grad_buf(n.inputs[3]);
  Tensor& dbm = grad_buf(n.inputs[4]);

  RowMat dyb = cmat(n.grad) * cmat(bm);  // [n, r]
  mat(dx).noalias() += cmat(n.grad) * cmat(w0);
  mat(dx).noalias() += s * (dyb * cmat(a));
  mat(da).noalias() += s * (dyb.transpose() * cmat(xv));
  mat(dbm).noalias() += s * (cmat(n.grad).transpose() * cmat(u));
}

Tensor Graph::param_grad(const ParamTensor& p) const {
  auto it = param_index_.find(&p);
  if (it == param_index_.end()) return Tensor(p.value.shape());
  const Node& n = nodes_[static_cast<size_t>(it->second)];
  if (!n.grad_live) return Tensor(p.value.shape());
  return n.grad;
}

void Graph::flush_param_grads() {
  for (int id : param_leaves_) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.grad_live) continue;
    Tensor& g = n.bound->grad;
    for (size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
  }
}

Tensor apply_layer(const std::string& kind, ParameterStore& params,
                   const std::vector<Tensor>& inputs, int n_heads) {
  Graph g;
  if (kind == "affine") {
    ValueRef x = g.constant(inputs.at(0), "input");
    return g.value(g.affine(x, params.get("weight"), params.get("bias"), "affine"));
  }
  if (kind == "layer_norm") {
    ValueRef x = g.constant(inputs.at(0), "input");
    return g.value(g.layer_norm(x, params.get("gain"), params.get("bias"), "layer_norm"));
  }
  if (kind == "mha") {
    ValueRef xq = g.constant(inputs.at(0), "query");
    ValueRef xkv = inputs.size() > 1 ? g.constant(inputs.at(1), "kv") : xq;
    return g.value(g.mha(xq, xkv, params.get("q.weight"), params.get("q.bias"),
                         params.get("k.weight"), params.get("k.bias"), params.get("v.weight"),
                         params.get("v.bias"), params.get("out.weight"), params.get("out.bias"),
                         n_heads, "mha"));
  }
  if (kind == "gelu_mlp") {
    ValueRef x = g.constant(inputs.at(0), "input");
    return g.value(g.gelu_mlp(x, params.get("in.weight"), params.get("in.bias"),
                              params.get("out.weight"), params.get("out.bias"), "mlp"));
  }
  if (kind == "residual") {
    ValueRef a = g.constant(inputs.at(0), "lhs");
    ValueRef b = g.constant(inputs.at(1), "rhs");
    return g.value(g.add(a, b, "residual"));
  }
  throw ConfigError("apply_layer: unknown kind '" + kind + "'");
}

}  // namespace geoadapt
