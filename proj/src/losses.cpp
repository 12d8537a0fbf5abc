#include "lfa/losses.hpp"

#include <cmath>

namespace lfa {

LossBundle& LossBundle::operator+=(const LossBundle& o) {
  l_rec += o.l_rec;
  l_adv1_d += o.l_adv1_d;
  l_adv1_g += o.l_adv1_g;
  l_adv2_d += o.l_adv2_d;
  l_adv2_e += o.l_adv2_e;
  l_diff += o.l_diff;
  l_proj += o.l_proj;
  return *this;
}

LossBundle& LossBundle::operator/=(double n) {
  l_rec /= n;
  l_adv1_d /= n;
  l_adv1_g /= n;
  l_adv2_d /= n;
  l_adv2_e /= n;
  l_diff /= n;
  l_proj /= n;
  return *this;
}

bool LossBundle::all_finite() const {
  for (double v : {l_rec, l_adv1_d, l_adv1_g, l_adv2_d, l_adv2_e, l_diff, l_proj})
    if (!std::isfinite(v)) return false;
  return true;
}

namespace {

template <typename T>
void require_batch(const Tensor<T>& p, const char* what) {
  if (p.empty()) throw ShapeError(std::string(what) + ": empty probability batch");
}

// scale * mean log p, or scale * mean log(1 - p) when `complement`.
template <typename T>
T mean_log(const Tensor<T>& p, bool complement, T scale, Tensor<T>* grad) {
  const auto n = static_cast<T>(p.size());
  T total = 0;
  if (grad) *grad = Tensor<T>(p.shape());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const T q = complement ? T(1) - p[i] : p[i];
    total += std::log(q);
    if (grad) (*grad)[i] = scale * (complement ? T(-1) : T(1)) / (q * n);
  }
  return scale * total / n;
}

}  // namespace

template <typename T>
T rec_loss(const Tensor<T>& x, const Tensor<T>& r, Tensor<T>* grad_r) {
  require_shape(r.shape(), x.shape(), "rec_loss");
  if (x.empty()) throw ShapeError("rec_loss: empty batch");
  const auto n = static_cast<T>(x.size());
  T total = 0;
  if (grad_r) *grad_r = Tensor<T>(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T d = x[i] - r[i];
    total += d * d;
    if (grad_r) (*grad_r)[i] = T(-2) * d / n;
  }
  return total / n;
}

template <typename T>
T adv1_discriminator_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake, Tensor<T>* grad_real,
                          Tensor<T>* grad_fake) {
  require_batch(d_real, "adv1_discriminator_loss");
  require_batch(d_fake, "adv1_discriminator_loss");
  return mean_log(d_real, false, T(-1), grad_real) + mean_log(d_fake, true, T(-1), grad_fake);
}

template <typename T>
T adv1_generator_loss(const Tensor<T>& d_fake, Tensor<T>* grad_fake, bool non_saturating) {
  require_batch(d_fake, "adv1_generator_loss");
  if (non_saturating) return mean_log(d_fake, false, T(-1), grad_fake);
  return mean_log(d_fake, true, T(1), grad_fake);
}

template <typename T>
T adv2_discriminator_loss(const Tensor<T>& d_encoded, const Tensor<T>& d_uniform,
                          Tensor<T>* grad_encoded, Tensor<T>* grad_uniform) {
  require_batch(d_encoded, "adv2_discriminator_loss");
  require_batch(d_uniform, "adv2_discriminator_loss");
  return mean_log(d_encoded, false, T(-1), grad_encoded) +
         mean_log(d_uniform, true, T(-1), grad_uniform);
}

template <typename T>
T adv2_encoder_loss(const Tensor<T>& d_encoded, Tensor<T>* grad_encoded) {
  require_batch(d_encoded, "adv2_encoder_loss");
  return mean_log(d_encoded, false, T(1), grad_encoded);
}

template <typename T>
T diff_loss(const Tensor<T>& y1, const Tensor<T>& y2, Tensor<T>* grad_y1, Tensor<T>* grad_y2) {
  require_shape(y2.shape(), y1.shape(), "diff_loss");
  if (y1.rank() < 2 || y1.empty()) throw ShapeError("diff_loss: expected a nonempty [N, ...] batch");
  const std::size_t images = y1.dim(0);
  const std::size_t pixels = y1.size() / images;
  const T inv_pixels = T(1) / static_cast<T>(pixels);
  if (grad_y1) *grad_y1 = Tensor<T>(y1.shape());
  if (grad_y2) *grad_y2 = Tensor<T>(y1.shape());
  T total = 0;
  for (std::size_t i = 0; i < images; ++i) {
    T image_sum = 0;
    for (std::size_t p = i * pixels; p < (i + 1) * pixels; ++p) {
      const T d = y1[p] - y2[p];
      image_sum += std::abs(d);
      const T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
      if (grad_y1) (*grad_y1)[p] = -s * inv_pixels;
      if (grad_y2) (*grad_y2)[p] = s * inv_pixels;
    }
    total += image_sum * inv_pixels;
  }
  return -total;
}

#define LFA_INSTANTIATE(T)                                                                     \
  template T rec_loss<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>*);                      \
  template T adv1_discriminator_loss<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>*,         \
                                        Tensor<T>*);                                            \
  template T adv1_generator_loss<T>(const Tensor<T>&, Tensor<T>*, bool);                        \
  template T adv2_discriminator_loss<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>*,         \
                                        Tensor<T>*);                                            \
  template T adv2_encoder_loss<T>(const Tensor<T>&, Tensor<T>*);                                \
  template T diff_loss<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>*, Tensor<T>*);

LFA_INSTANTIATE(float)
LFA_INSTANTIATE(double)

#undef LFA_INSTANTIATE

}  // namespace lfa
