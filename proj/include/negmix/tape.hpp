#pragma once

#include <functional>
#include <vector>

#include "negmix/common.hpp"

namespace negmix {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
class Var {
 public:
  Var() = default;
  const Mat& value() const;
  const Mat& grad() const;  // accumulated gradient, zero until backward reaches it
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool valid() const { return tape_ != nullptr; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Reverse-mode autodiff over Eigen matrices. Ops append nodes; backward()
// walks the recording in reverse and *adds* into each tracked node's grad,
// so gradients from repeated backward calls accumulate.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Mat value);      // tracked input (parameters, features)
  Var constant(Mat value);  // untracked value; gradients stop here

  Var add(Var a, Var b);
  Var subtract(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var negate(Var a);
  Var scale(Var a, double c);
  Var add_rowvec(Var a, Var row);   // a: NxD, row: 1xD
  Var row_scale(Var a, Var s);      // a: NxD, s: Nx1; row r scaled by s(r)
  Var matmul(Var a, Var b);
  Var concat_cols(const std::vector<Var>& parts);
  Var slice_cols(Var a, int begin, int end);  // half-open [begin, end)
  Var exp(Var a);
  Var log(Var a);        // requires strictly positive entries
  Var recip(Var a);      // requires nonzero entries
  Var clamp(Var a, double lo, double hi);  // gradient passes strictly inside
  Var elu(Var a);
  Var leaky_relu(Var a, double slope);
  Var row_softmax(Var a);
  // values: Ex1 scores; ids: size E, sorted, contiguous from 0. Softmax is
  // taken independently within each segment.
  Var segment_softmax(Var values, const std::vector<int>& segment_ids);
  Var segment_sum(Var values, const std::vector<int>& segment_ids, int num_segments);
  // Every segment 0..num_segments-1 must be non-empty (mean is undefined on
  // an empty segment).
  Var segment_mean(Var values, const std::vector<int>& segment_ids, int num_segments);
  Var gather_rows(Var a, const std::vector<int>& idx);
  // Rows of a placed at idx into a num_rows-tall zero matrix; duplicate
  // indices accumulate.
  Var scatter_rows(Var a, const std::vector<int>& idx, int num_rows);
  Var take_per_row(Var a, const std::vector<int>& col_idx);  // Nx1
  Var row_sum(Var a);   // Nx1
  Var diagonal(Var a);  // Nx1, a square
  Var cosine_similarity_rows(Var a, Var b);  // Nx1, rows must be nonzero
  Var cosine_pairs(Var a, Var b);            // Na x Nb, rows must be nonzero
  Var sum_scalar(Var a);   // 1x1
  Var mean_scalar(Var a);  // 1x1

  // Seeds d(scalar)/d(scalar) = 1 and propagates. scalar must be 1x1.
  void backward(Var scalar);

  size_t size() const { return nodes_.size(); }

 private:
  friend class Var;
  struct Node {
    Mat value;
    Mat grad;  // lazily sized on first accumulation
    bool tracked = false;
    std::function<void(const Mat&, std::vector<Mat>&)> back;
  };

  Var push(Mat value, bool tracked,
           std::function<void(const Mat&, std::vector<Mat>&)> back);
  bool tracked(Var v) const { return nodes_[static_cast<size_t>(v.id_)].tracked; }
  const Mat& val(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  void acc(std::vector<Mat>& scratch, int id, const Mat& g);
  void own(Var v) const;

  std::vector<Node> nodes_;
};

}  // namespace negmix
