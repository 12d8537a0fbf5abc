#pragma once

#include "lfa/tensor.hpp"

namespace lfa {

// Scalars of one training step, in the order the trainer produces them.
struct LossBundle {
  double l_rec = 0.0;
  double l_adv1_d = 0.0;
  double l_adv1_g = 0.0;
  double l_adv2_d = 0.0;
  double l_adv2_e = 0.0;
  double l_diff = 0.0;
  double l_proj = 0.0;

  LossBundle& operator+=(const LossBundle& o);
  LossBundle& operator/=(double n);
  bool all_finite() const;
};

// Every loss takes its inputs by shape-checked tensor and, when the gradient
// pointers are non-null, overwrites them with d(loss)/d(input).

// Mean over images and pixels of (X - R)^2. Gradient is w.r.t. R.
template <typename T>
T rec_loss(const Tensor<T>& x, const Tensor<T>& r, Tensor<T>* grad_r = nullptr);

// -[mean log d_real + mean log(1 - d_fake)]; the image discriminator descends it.
template <typename T>
T adv1_discriminator_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake,
                          Tensor<T>* grad_real = nullptr, Tensor<T>* grad_fake = nullptr);

// mean log(1 - d_fake) as written in the min-max objective (saturating). With
// `non_saturating` the generator instead descends -mean log d_fake.
template <typename T>
T adv1_generator_loss(const Tensor<T>& d_fake, Tensor<T>* grad_fake = nullptr,
                      bool non_saturating = false);

// -[mean log d_encoded + mean log(1 - d_uniform)]; the latent discriminator
// descends it, i.e. it learns to score encoded latents high and prior
// samples low.
template <typename T>
T adv2_discriminator_loss(const Tensor<T>& d_encoded, const Tensor<T>& d_uniform,
                          Tensor<T>* grad_encoded = nullptr, Tensor<T>* grad_uniform = nullptr);

// mean log d_encoded; the encoder descends it.
template <typename T>
T adv2_encoder_loss(const Tensor<T>& d_encoded, Tensor<T>* grad_encoded = nullptr);

// -sum over images of mean_pixels |Y1 - Y2|. Always <= 0. The subgradient
// at Y1 == Y2 is taken as zero.
template <typename T>
T diff_loss(const Tensor<T>& y1, const Tensor<T>& y2, Tensor<T>* grad_y1 = nullptr,
            Tensor<T>* grad_y2 = nullptr);

}  // namespace lfa
