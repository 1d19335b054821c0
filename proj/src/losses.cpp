#include "s2d/losses.hpp"

#include <cmath>

namespace s2d {

const char* loss_name(LossKind k) {
    switch (k) {
        case LossKind::L1: return "l1";
        case LossKind::L2: return "l2";
        case LossKind::berHu: return "berhu";
    }
    return "l1";
}

LossKind parse_loss(const std::string& s) {
    if (s == "l1") return LossKind::L1;
    if (s == "l2") return LossKind::L2;
    if (s == "berhu") return LossKind::berHu;
    throw std::invalid_argument("unknown loss kind: " + s);
}

namespace {

template <typename T>
i64 mask_count(const Tensor<T>& mask) {
    i64 n = 0;
    for (T v : mask.data) n += (v != T(0)) ? 1 : 0;
    check(n > 0, "loss: mask has no valid pixels");
    return n;
}

// (pred - gt) zeroed outside the mask, as a tape node.
template <typename T>
Var<T> masked_error(Var<T> pred, const Tensor<T>& gt, const Tensor<T>& mask) {
    check(pred.shape() == gt.shape && pred.shape() == mask.shape,
          "loss: prediction, ground truth and mask shapes must agree");
    Var<T> g = pred.tape->constant(gt);
    Var<T> m = pred.tape->constant(mask);
    return ops::mul(ops::sub(pred, g), m);
}

}  // namespace

template <typename T>
Var<T> loss_l2(Var<T> pred, const Tensor<T>& gt, const Tensor<T>& mask) {
    const i64 n = mask_count(mask);
    Var<T> e = masked_error(pred, gt, mask);
    return ops::scale(ops::sum_all(ops::square(e)), 1.0 / double(n));
}

template <typename T>
Var<T> loss_l1(Var<T> pred, const Tensor<T>& gt, const Tensor<T>& mask) {
    const i64 n = mask_count(mask);
    Var<T> e = masked_error(pred, gt, mask);
    return ops::scale(ops::sum_all(ops::abs_val(e)), 1.0 / double(n));
}

template <typename T>
double berhu_threshold(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& mask) {
    check(pred.shape == gt.shape && pred.shape == mask.shape,
          "loss: prediction, ground truth and mask shapes must agree");
    mask_count(mask);
    double max_abs = 0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        if (mask.data[i] == T(0)) continue;
        const double e = std::abs(static_cast<double>(pred.data[i]) -
                                  static_cast<double>(gt.data[i]));
        if (e > max_abs) max_abs = e;
    }
    return 0.2 * max_abs;
}

template <typename T>
Var<T> loss_berhu(Var<T> pred, const Tensor<T>& gt, const Tensor<T>& mask) {
    const i64 n = mask_count(mask);
    const double c = berhu_threshold(pred.val(), gt, mask);
    Var<T> e = masked_error(pred, gt, mask);
    return ops::scale(ops::sum_all(ops::berhu_elem(e, c)), 1.0 / double(n));
}

template <typename T>
Var<T> make_loss(LossKind kind, Var<T> pred, const Tensor<T>& gt, const Tensor<T>& mask) {
    switch (kind) {
        case LossKind::L1: return loss_l1(pred, gt, mask);
        case LossKind::L2: return loss_l2(pred, gt, mask);
        case LossKind::berHu: return loss_berhu(pred, gt, mask);
    }
    throw std::invalid_argument("unknown loss kind");
}

#define S2D_LOSSES_INSTANTIATE(T)                                                        \
    template Var<T> loss_l2<T>(Var<T>, const Tensor<T>&, const Tensor<T>&);              \
    template Var<T> loss_l1<T>(Var<T>, const Tensor<T>&, const Tensor<T>&);              \
    template Var<T> loss_berhu<T>(Var<T>, const Tensor<T>&, const Tensor<T>&);           \
    template Var<T> make_loss<T>(LossKind, Var<T>, const Tensor<T>&, const Tensor<T>&);  \
    template double berhu_threshold<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

S2D_LOSSES_INSTANTIATE(float)
S2D_LOSSES_INSTANTIATE(double)
#undef S2D_LOSSES_INSTANTIATE

}  // namespace s2d
