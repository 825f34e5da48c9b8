#include "negmix/tape.hpp"

#include <cmath>
#include <string>

namespace negmix {

namespace {

std::string shape_str(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

// segment_ids must be sorted, start at 0, and increase in steps of at most 1.
// Returns the number of segments actually present (last id + 1).
int validate_segments(const std::vector<int>& ids, Eigen::Index rows,
                      const char* op) {
  check(static_cast<Eigen::Index>(ids.size()) == rows,
        std::string(op) + ": segment_ids size must equal row count");
  check(!ids.empty(), std::string(op) + ": empty input");
  check(ids.front() == 0, std::string(op) + ": segment_ids must start at 0");
  for (size_t i = 1; i < ids.size(); ++i) {
    int step = ids[i] - ids[i - 1];
    check(step == 0 || step == 1,
          std::string(op) + ": segment_ids must be sorted and contiguous");
  }
  return ids.back() + 1;
}

}  // namespace

const Mat& Var::value() const {
  check(tape_ != nullptr, "Var: unbound handle");
  return tape_->val(id_);
}

const Mat& Var::grad() const {
  check(tape_ != nullptr, "Var: unbound handle");
  const Mat& v = tape_->val(id_);
  Mat& g = tape_->nodes_[static_cast<size_t>(id_)].grad;
  if (g.size() == 0) g = Mat::Zero(v.rows(), v.cols());
  return g;
}

Var Tape::push(Mat value, bool tracked,
               std::function<void(const Mat&, std::vector<Mat>&)> back) {
  Node n;
  n.value = std::move(value);
  n.tracked = tracked;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::own(Var v) const {
  check(v.tape_ == this && v.id_ >= 0 &&
            v.id_ < static_cast<int>(nodes_.size()),
        "Tape: Var belongs to a different tape");
}

void Tape::acc(std::vector<Mat>& scratch, int id, const Mat& g) {
  if (!nodes_[static_cast<size_t>(id)].tracked) return;
  Mat& slot = scratch[static_cast<size_t>(id)];
  if (slot.size() == 0)
    slot = g;
  else
    slot += g;
}

Var Tape::leaf(Mat value) { return push(std::move(value), true, nullptr); }

Var Tape::constant(Mat value) { return push(std::move(value), false, nullptr); }

Var Tape::add(Var a, Var b) {
  own(a); own(b);
  check(a.value().rows() == b.value().rows() &&
            a.value().cols() == b.value().cols(),
        "add: shape mismatch " + shape_str(a.value()) + " vs " +
            shape_str(b.value()));
  int ia = a.id_, ib = b.id_;
  return push(a.value() + b.value(), tracked(a) || tracked(b),
              [this, ia, ib](const Mat& g, std::vector<Mat>& s) {
                acc(s, ia, g);
                acc(s, ib, g);
              });
}

Var Tape::subtract(Var a, Var b) {
  own(a); own(b);
  check(a.value().rows() == b.value().rows() &&
            a.value().cols() == b.value().cols(),
        "subtract: shape mismatch");
  int ia = a.id_, ib = b.id_;
  return push(a.value() - b.value(), tracked(a) || tracked(b),
              [this, ia, ib](const Mat& g, std::vector<Mat>& s) {
                acc(s, ia, g);
                acc(s, ib, Mat(-g));
              });
}

Var Tape::mul(Var a, Var b) {
  own(a); own(b);
  check(a.value().rows() == b.value().rows() &&
            a.value().cols() == b.value().cols(),
        "mul: shape mismatch");
  int ia = a.id_, ib = b.id_;
  return push(Mat(a.value().cwiseProduct(b.value())), tracked(a) || tracked(b),
              [this, ia, ib](const Mat& g, std::vector<Mat>& s) {
                acc(s, ia, Mat(g.cwiseProduct(val(ib))));
                acc(s, ib, Mat(g.cwiseProduct(val(ia))));
              });
}

Var Tape::negate(Var a) {
  own(a);
  int ia = a.id_;
  return push(Mat(-a.value()), tracked(a),
              [this, ia](const Mat& g, std::vector<Mat>& s) {
                acc(s, ia, Mat(-g));
              });
}

Var Tape::scale(Var a, double c) {
  own(a);
  int ia = a.id_;
  return push(Mat(a.value() * c), tracked(a),
              [this, ia, c](const Mat& g, std::vector<Mat>& s) {
                acc(s, ia, Mat(g * c));
              });
}

Var Tape::add_rowvec(Var a, Var row) {
  own(a); own(row);
  check(row.value().rows() == 1, "add_rowvec: row must be 1xD");
  check(row.value().cols() == a.value().cols(),
        "add_rowvec: column count mismatch");
  int ia = a.id_, ir = row.id_;
  Mat out = a.value();
  out.rowwise() += row.value().row(0);
  return push(std::move(out), tracked(a) || tracked(row),
              [this, ia, ir](const Mat& g, std::vector<Mat>& s) {
                acc(s, ia, g);
                acc(s, ir, Mat(g.colwise().sum()));
              });
}

Var Tape::row_scale(Var a, Var sv) {
  own(a); own(sv);
  check(sv.value().cols() == 1, "row_scale: scale must be Nx1");
  check(sv.value().rows() == a.value().rows(), "row_scale: row count mismatch");
  int ia = a.id_, is = sv.id_;
  Mat out = (a.value().array().colwise() * sv.value().col(0).array()).matrix();
  return push(std::move(out), tracked(a) || tracked(sv),
              [this, ia, is](const Mat& g, std::vector<Mat>& s) {
                acc(s, ia, Mat((g.array().colwise() * val(is).col(0).array()).matrix()));
                acc(s, is, Mat(g.cwiseProduct(val(ia)).rowwise().sum()));
              });
}

Var Tape::matmul(Var a, Var b) {
  own(a); own(b);
  check(a.value().cols() == b.value().rows(),
        "matmul: inner dimension mismatch " + shape_str(a.value()) + " vs " +
            shape_str(b.value()));
  int ia = a.id_, ib = b.id_;
  return push(Mat(a.value() * b.value()), tracked(a) || tracked(b),
              [this, ia, ib](const Mat& g, std::vector<Mat>& s) {
                acc(s, ia, Mat(g * val(ib).transpose()));
                acc(s, ib, Mat(val(ia).transpose() * g));
              });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  check(!parts.empty(), "concat_cols: no inputs");
  Eigen::Index rows = parts.front().value().rows();
  Eigen::Index cols = 0;
  bool any_tracked = false;
  for (Var p : parts) {
    own(p);
    check(p.value().rows() == rows, "concat_cols: row count mismatch");
    cols += p.value().cols();
    any_tracked = any_tracked || tracked(p);
  }
  Mat out(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleCols(at, p.value().cols()) = p.value();
    ids.push_back(p.id_);
    offsets.push_back(at);
    at += p.value().cols();
  }
  return push(std::move(out), any_tracked,
              [this, ids, offsets](const Mat& g, std::vector<Mat>& s) {
                for (size_t k = 0; k < ids.size(); ++k) {
                  Eigen::Index w = val(ids[k]).cols();
                  acc(s, ids[k], Mat(g.middleCols(offsets[k], w)));
                }
              });
}

Var Tape::slice_cols(Var a, int begin, int end) {
  own(a);
  check(0 <= begin && begin < end && end <= a.value().cols(),
        "slice_cols: range out of bounds");
  int ia = a.id_;
  return push(Mat(a.value().middleCols(begin, end - begin)), tracked(a),
              [this, ia, begin, end](const Mat& g, std::vector<Mat>& s) {
                Mat full = Mat::Zero(val(ia).rows(), val(ia).cols());
                full.middleCols(begin, end - begin) = g;
                acc(s, ia, full);
              });
}

Var Tape::exp(Var a) {
  own(a);
  int ia = a.id_;
  Var out = push(Mat(a.value().array().exp().matrix()), tracked(a), nullptr);
  int io = out.id_;
  nodes_.back().back = [this, ia, io](const Mat& g, std::vector<Mat>& s) {
    acc(s, ia, Mat(g.cwiseProduct(val(io))));
  };
  return out;
}

Var Tape::log(Var a) {
  own(a);
  check((a.value().array() > 0.0).all(), "log: requires positive entries");
  int ia = a.id_;
  return push(Mat(a.value().array().log().matrix()), tracked(a),
              [this, ia](const Mat& g, std::vector<Mat>& s) {
                acc(s, ia, Mat(g.cwiseQuotient(val(ia))));
              });
}

Var Tape::recip(Var a) {
  own(a);
  check((a.value().array() != 0.0).all(), "recip: requires nonzero entries");
  int ia = a.id_;
  return push(Mat(a.value().cwiseInverse()), tracked(a),
              [this, ia](const Mat& g, std::vector<Mat>& s) {
                Mat sq = val(ia).cwiseProduct(val(ia));
                acc(s, ia, Mat(-g.cwiseQuotient(sq)));
              });
}

Var Tape::clamp(Var a, double lo, double hi) {
  own(a);
  check(lo <= hi, "clamp: lo must not exceed hi");
  int ia = a.id_;
  Mat out = a.value().array().max(lo).min(hi).matrix();
  return push(std::move(out), tracked(a),
              [this, ia, lo, hi](const Mat& g, std::vector<Mat>& s) {
                const Mat& x = val(ia);
                Mat mask = ((x.array() > lo) && (x.array() < hi)).cast<double>().matrix();
                acc(s, ia, Mat(mask.cwiseProduct(g)));
              });
}

Var Tape::elu(Var a) {
  own(a);
  int ia = a.id_;
  Mat out = a.value().unaryExpr(
      [](double x) { return x > 0.0 ? x : std::expm1(x); });
  return push(std::move(out), tracked(a),
              [this, ia](const Mat& g, std::vector<Mat>& s) {
                const Mat& x = val(ia);
                Mat d = x.unaryExpr(
                    [](double v) { return v > 0.0 ? 1.0 : std::exp(v); });
                acc(s, ia, Mat(g.cwiseProduct(d)));
              });
}

Var Tape::leaky_relu(Var a, double slope) {
  own(a);
  int ia = a.id_;
  Mat out = a.value().unaryExpr(
      [slope](double x) { return x > 0.0 ? x : slope * x; });
  return push(std::move(out), tracked(a),
              [this, ia, slope](const Mat& g, std::vector<Mat>& s) {
                const Mat& x = val(ia);
                Mat d = x.unaryExpr(
                    [slope](double v) { return v > 0.0 ? 1.0 : slope; });
                acc(s, ia, Mat(g.cwiseProduct(d)));
              });
}

Var Tape::row_softmax(Var a) {
  own(a);
  int ia = a.id_;
  Mat out(a.value().rows(), a.value().cols());
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    Eigen::ArrayXd row = a.value().row(r).array();
    Eigen::ArrayXd e = (row - row.maxCoeff()).exp();
    out.row(r) = (e / e.sum()).matrix();
  }
  Var res = push(std::move(out), tracked(a), nullptr);
  int io = res.id_;
  nodes_.back().back = [this, ia, io](const Mat& g, std::vector<Mat>& s) {
    const Mat& p = val(io);
    Mat dx(p.rows(), p.cols());
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      double dot = p.row(r).dot(g.row(r));
      dx.row(r) = p.row(r).cwiseProduct(g.row(r)) - dot * p.row(r);
    }
    acc(s, ia, dx);
  };
  return res;
}

Var Tape::segment_softmax(Var values, const std::vector<int>& ids) {
  own(values);
  check(values.value().cols() == 1, "segment_softmax: values must be Ex1");
  int nseg = validate_segments(ids, values.value().rows(), "segment_softmax");
  (void)nseg;
  const Mat& v = values.value();
  Mat out(v.rows(), 1);
  size_t start = 0;
  while (start < ids.size()) {
    size_t stop = start;
    while (stop < ids.size() && ids[stop] == ids[start]) ++stop;
    Eigen::Index len = static_cast<Eigen::Index>(stop - start);
    Eigen::ArrayXd seg = v.col(0).segment(static_cast<Eigen::Index>(start), len).array();
    Eigen::ArrayXd e = (seg - seg.maxCoeff()).exp();
    out.col(0).segment(static_cast<Eigen::Index>(start), len) = (e / e.sum()).matrix();
    start = stop;
  }
  int iv = values.id_;
  Var res = push(std::move(out), tracked(values), nullptr);
  int io = res.id_;
  nodes_.back().back = [this, iv, io, ids](const Mat& g, std::vector<Mat>& s) {
    const Mat& p = val(io);
    Mat dx(p.rows(), 1);
    size_t a = 0;
    while (a < ids.size()) {
      size_t b = a;
      while (b < ids.size() && ids[b] == ids[a]) ++b;
      Eigen::Index off = static_cast<Eigen::Index>(a);
      Eigen::Index len = static_cast<Eigen::Index>(b - a);
      auto ps = p.col(0).segment(off, len);
      auto gs = g.col(0).segment(off, len);
      double dot = ps.dot(gs);
      dx.col(0).segment(off, len) =
          ps.cwiseProduct(gs - Eigen::VectorXd::Constant(len, dot));
      a = b;
    }
    acc(s, iv, dx);
  };
  return res;
}

Var Tape::segment_sum(Var values, const std::vector<int>& ids, int num_segments) {
  own(values);
  int present = validate_segments(ids, values.value().rows(), "segment_sum");
  check(num_segments >= present, "segment_sum: num_segments too small");
  const Mat& v = values.value();
  Mat out = Mat::Zero(num_segments, v.cols());
  for (Eigen::Index r = 0; r < v.rows(); ++r)
    out.row(ids[static_cast<size_t>(r)]) += v.row(r);
  int iv = values.id_;
  return push(std::move(out), tracked(values),
              [this, iv, ids](const Mat& g, std::vector<Mat>& s) {
                Mat dv(val(iv).rows(), val(iv).cols());
                for (Eigen::Index r = 0; r < dv.rows(); ++r)
                  dv.row(r) = g.row(ids[static_cast<size_t>(r)]);
                acc(s, iv, dv);
              });
}

Var Tape::segment_mean(Var values, const std::vector<int>& ids, int num_segments) {
  own(values);
  int present = validate_segments(ids, values.value().rows(), "segment_mean");
  check(num_segments == present,
        "segment_mean: empty segment (num_segments exceeds ids present)");
  const Mat& v = values.value();
  Mat out = Mat::Zero(num_segments, v.cols());
  std::vector<double> count(static_cast<size_t>(num_segments), 0.0);
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    out.row(ids[static_cast<size_t>(r)]) += v.row(r);
    count[static_cast<size_t>(ids[static_cast<size_t>(r)])] += 1.0;
  }
  for (int sgm = 0; sgm < num_segments; ++sgm)
    out.row(sgm) /= count[static_cast<size_t>(sgm)];
  int iv = values.id_;
  return push(std::move(out), tracked(values),
              [this, iv, ids, count](const Mat& g, std::vector<Mat>& s) {
                Mat dv(val(iv).rows(), val(iv).cols());
                for (Eigen::Index r = 0; r < dv.rows(); ++r) {
                  int sgm = ids[static_cast<size_t>(r)];
                  dv.row(r) = g.row(sgm) / count[static_cast<size_t>(sgm)];
                }
                acc(s, iv, dv);
              });
}

Var Tape::gather_rows(Var a, const std::vector<int>& idx) {
  own(a);
  const Mat& v = a.value();
  for (int i : idx)
    check(0 <= i && i < v.rows(), "gather_rows: index out of range");
  Mat out(static_cast<Eigen::Index>(idx.size()), v.cols());
  for (size_t r = 0; r < idx.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = v.row(idx[r]);
  int ia = a.id_;
  return push(std::move(out), tracked(a),
              [this, ia, idx](const Mat& g, std::vector<Mat>& s) {
                Mat da = Mat::Zero(val(ia).rows(), val(ia).cols());
                for (size_t r = 0; r < idx.size(); ++r)
                  da.row(idx[r]) += g.row(static_cast<Eigen::Index>(r));
                acc(s, ia, da);
              });
}

Var Tape::scatter_rows(Var a, const std::vector<int>& idx, int num_rows) {
  own(a);
  const Mat& v = a.value();
  check(static_cast<Eigen::Index>(idx.size()) == v.rows(),
        "scatter_rows: index count must equal row count");
  for (int i : idx)
    check(0 <= i && i < num_rows, "scatter_rows: index out of range");
  Mat out = Mat::Zero(num_rows, v.cols());
  for (size_t r = 0; r < idx.size(); ++r)
    out.row(idx[r]) += v.row(static_cast<Eigen::Index>(r));
  int ia = a.id_;
  return push(std::move(out), tracked(a),
              [this, ia, idx](const Mat& g, std::vector<Mat>& s) {
                Mat da(val(ia).rows(), val(ia).cols());
                for (size_t r = 0; r < idx.size(); ++r)
                  da.row(static_cast<Eigen::Index>(r)) = g.row(idx[r]);
                acc(s, ia, da);
              });
}

Var Tape::take_per_row(Var a, const std::vector<int>& col_idx) {
  own(a);
  const Mat& v = a.value();
  check(static_cast<Eigen::Index>(col_idx.size()) == v.rows(),
        "take_per_row: index count must equal row count");
  for (int c : col_idx)
    check(0 <= c && c < v.cols(), "take_per_row: column index out of range");
  Mat out(v.rows(), 1);
  for (Eigen::Index r = 0; r < v.rows(); ++r)
    out(r, 0) = v(r, col_idx[static_cast<size_t>(r)]);
  int ia = a.id_;
  return push(std::move(out), tracked(a),
              [this, ia, col_idx](const Mat& g, std::vector<Mat>& s) {
                Mat da = Mat::Zero(val(ia).rows(), val(ia).cols());
                for (Eigen::Index r = 0; r < da.rows(); ++r)
                  da(r, col_idx[static_cast<size_t>(r)]) = g(r, 0);
                acc(s, ia, da);
              });
}

Var Tape::row_sum(Var a) {
  own(a);
  int ia = a.id_;
  return push(Mat(a.value().rowwise().sum()), tracked(a),
              [this, ia](const Mat& g, std::vector<Mat>& s) {
                Mat da = g.col(0).replicate(1, val(ia).cols());
                acc(s, ia, da);
              });
}

Var Tape::diagonal(Var a) {
  own(a);
  check(a.value().rows() == a.value().cols(), "diagonal: matrix must be square");
  int ia = a.id_;
  return push(Mat(a.value().diagonal()), tracked(a),
              [this, ia](const Mat& g, std::vector<Mat>& s) {
                Mat da = Mat::Zero(val(ia).rows(), val(ia).cols());
                da.diagonal() = g.col(0);
                acc(s, ia, da);
              });
}

Var Tape::cosine_similarity_rows(Var a, Var b) {
  own(a); own(b);
  const Mat& u = a.value();
  const Mat& w = b.value();
  check(u.rows() == w.rows() && u.cols() == w.cols(),
        "cosine_similarity_rows: shape mismatch");
  Mat out(u.rows(), 1);
  for (Eigen::Index r = 0; r < u.rows(); ++r) {
    double nu = u.row(r).norm(), nw = w.row(r).norm();
    check(nu > 0.0 && nw > 0.0,
          "cosine_similarity_rows: zero-norm row " + std::to_string(r));
    out(r, 0) = u.row(r).dot(w.row(r)) / (nu * nw);
  }
  int ia = a.id_, ib = b.id_;
  Var res = push(std::move(out), tracked(a) || tracked(b), nullptr);
  int io = res.id_;
  nodes_.back().back = [this, ia, ib, io](const Mat& g, std::vector<Mat>& s) {
    const Mat& u2 = val(ia);
    const Mat& w2 = val(ib);
    const Mat& c = val(io);
    Mat da(u2.rows(), u2.cols()), db(u2.rows(), u2.cols());
    for (Eigen::Index r = 0; r < u2.rows(); ++r) {
      double nu = u2.row(r).norm(), nw = w2.row(r).norm();
      da.row(r) = g(r, 0) * (w2.row(r) / (nu * nw) - c(r, 0) * u2.row(r) / (nu * nu));
      db.row(r) = g(r, 0) * (u2.row(r) / (nu * nw) - c(r, 0) * w2.row(r) / (nw * nw));
    }
    acc(s, ia, da);
    acc(s, ib, db);
  };
  return res;
}

Var Tape::cosine_pairs(Var a, Var b) {
  own(a); own(b);
  const Mat& u = a.value();
  const Mat& w = b.value();
  check(u.cols() == w.cols(), "cosine_pairs: feature dimension mismatch");
  for (Eigen::Index r = 0; r < u.rows(); ++r)
    check(u.row(r).norm() > 0.0, "cosine_pairs: zero-norm row in first input");
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    check(w.row(r).norm() > 0.0, "cosine_pairs: zero-norm row in second input");
  Mat un = u.rowwise().normalized();
  Mat wn = w.rowwise().normalized();
  Mat out = un * wn.transpose();
  int ia = a.id_, ib = b.id_;
  Var res = push(std::move(out), tracked(a) || tracked(b), nullptr);
  int io = res.id_;
  nodes_.back().back = [this, ia, ib, io](const Mat& g, std::vector<Mat>& s) {
    const Mat& u2 = val(ia);
    const Mat& w2 = val(ib);
    const Mat& c = val(io);
    Mat un2 = u2.rowwise().normalized();
    Mat wn2 = w2.rowwise().normalized();
    Vec rowdot = g.cwiseProduct(c).rowwise().sum();
    Vec coldot = g.cwiseProduct(c).colwise().sum().transpose();
    Mat da = g * wn2;
    for (Eigen::Index r = 0; r < da.rows(); ++r)
      da.row(r) = (da.row(r) - rowdot(r) * un2.row(r)) / u2.row(r).norm();
    Mat db = g.transpose() * un2;
    for (Eigen::Index r = 0; r < db.rows(); ++r)
      db.row(r) = (db.row(r) - coldot(r) * wn2.row(r)) / w2.row(r).norm();
    acc(s, ia, da);
    acc(s, ib, db);
  };
  return res;
}

Var Tape::sum_scalar(Var a) {
  own(a);
  int ia = a.id_;
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return push(std::move(out), tracked(a),
              [this, ia](const Mat& g, std::vector<Mat>& s) {
                acc(s, ia, Mat(Mat::Constant(val(ia).rows(), val(ia).cols(), g(0, 0))));
              });
}

Var Tape::mean_scalar(Var a) {
  own(a);
  int ia = a.id_;
  double n = static_cast<double>(a.value().size());
  check(n > 0, "mean_scalar: empty input");
  Mat out(1, 1);
  out(0, 0) = a.value().sum() / n;
  return push(std::move(out), tracked(a),
              [this, ia, n](const Mat& g, std::vector<Mat>& s) {
                acc(s, ia, Mat(Mat::Constant(val(ia).rows(), val(ia).cols(),
                                             g(0, 0) / n)));
              });
}

void Tape::backward(Var scalar) {
  own(scalar);
  check(scalar.value().rows() == 1 && scalar.value().cols() == 1,
        "backward: root must be 1x1");
  std::vector<Mat> scratch(nodes_.size());
  scratch[static_cast<size_t>(scalar.id_)] = Mat::Ones(1, 1);
  for (int i = scalar.id_; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    Mat& g = scratch[static_cast<size_t>(i)];
    if (g.size() == 0 || !n.tracked) continue;
    if (n.back) n.back(g, scratch);
  }
  for (size_t i = 0; i < nodes_.size(); ++i) {
    if (scratch[i].size() == 0 || !nodes_[i].tracked) continue;
    if (nodes_[i].grad.size() == 0)
      nodes_[i].grad = scratch[i];
    else
      nodes_[i].grad += scratch[i];
  }
}

}  // namespace negmix
