#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tmtsc {

using Index = Eigen::Index;

// Row-major so that a flattened tensor matches the on-disk layout and a
// (B*T) x D activation reshapes to B x (T*D) without moving data.
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using RowVector = RowVectorX<double>;

enum class Mode { train, eval };

/// Checks rank 1 or 2 and positive dimensions.
void validate_shape(const std::vector<Index>& shape);

/// Shape plus row-major values. Rank-1 tensors are held as a 1 x n matrix,
/// rank-2 as rows x cols.
template <typename Scalar>
struct BasicTensor {
  std::vector<Index> shape;
  MatrixX<Scalar> data;

  [[nodiscard]] Index numel() const { return data.size(); }
};

template <typename Scalar = double>
BasicTensor<Scalar> make_tensor(std::vector<Index> shape) {
  validate_shape(shape);
  BasicTensor<Scalar> t;
  t.data = shape.size() == 1 ? MatrixX<Scalar>::Zero(1, shape[0]) : MatrixX<Scalar>::Zero(shape[0], shape[1]);
  t.shape = std::move(shape);
  return t;
}

/// A named learnable (or, with trainable == false, a persistent buffer such
/// as batch-norm running statistics).
template <typename Scalar>
struct BasicParameter {
  std::string name;
  BasicTensor<Scalar> value;
  MatrixX<Scalar> grad;
  bool trainable = true;

  [[nodiscard]] const std::vector<Index>& shape() const { return value.shape; }
  [[nodiscard]] Index numel() const { return value.numel(); }
  void zero_grad() { grad.setZero(value.data.rows(), value.data.cols()); }
};

[[noreturn]] void throw_duplicate_parameter(const std::string& name);
[[noreturn]] void throw_unknown_parameter(std::string_view name);

/// Ordered, name-indexed parameter storage. Order is creation order and is
/// the checkpoint order. References returned by add() are invalidated by
/// later calls to add().
template <typename Scalar>
class BasicParameterSet {
 public:
  using ParameterType = BasicParameter<Scalar>;

  ParameterType& add(std::string name, std::vector<Index> shape, bool trainable = true) {
    if (index_.count(name) != 0) throw_duplicate_parameter(name);
    ParameterType p;
    p.value = make_tensor<Scalar>(std::move(shape));
    p.trainable = trainable;
    p.name = std::move(name);
    p.zero_grad();
    index_.emplace(p.name, items_.size());
    items_.push_back(std::move(p));
    return items_.back();
  }

  [[nodiscard]] ParameterType& operator[](std::string_view name) {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw_unknown_parameter(name);
    return items_[it->second];
  }
  [[nodiscard]] const ParameterType& operator[](std::string_view name) const {
    return const_cast<BasicParameterSet&>(*this)[name];
  }
  [[nodiscard]] bool contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }

  [[nodiscard]] std::size_t size() const { return items_.size(); }
  [[nodiscard]] bool empty() const { return items_.empty(); }

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  [[nodiscard]] auto begin() const { return items_.begin(); }
  [[nodiscard]] auto end() const { return items_.end(); }

  void zero_grad() {
    for (auto& p : items_) p.zero_grad();
  }

  /// Same names, shapes and flags with values converted to another scalar.
  template <typename To>
  [[nodiscard]] BasicParameterSet<To> cast() const {
    BasicParameterSet<To> out;
    for (const auto& p : items_) {
      out.add(p.name, p.value.shape, p.trainable).value.data = p.value.data.template cast<To>();
    }
    return out;
  }

 private:
  std::vector<ParameterType> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

using Tensor = BasicTensor<double>;
using Parameter = BasicParameter<double>;
using ParameterSet = BasicParameterSet<double>;

/// Scalar learnables only; buffers are not counted.
std::size_t count_params(const ParameterSet& params);
/// Scalar learnables whose name starts with prefix.
std::size_t count_params(const ParameterSet& params, std::string_view prefix);

}  // namespace tmtsc
