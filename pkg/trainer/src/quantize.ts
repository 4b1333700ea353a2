/**
 * Uniform scalar weight quantizer with a straight-through estimator.
 *
 * w_q = round(w * (2^k - 1)) / (2^k - 1) on weights clamped to [-1, 1];
 * the backward pass treats the quantizer as identity so gradients flow.
 */

import * as tf from "@tensorflow/tfjs";

export function quantLevels(bits: number): number {
  return (1 << bits) - 1;
}

/** Scalar quantizer on plain numbers (ties round away from zero). */
export function quantizeValue(w: number, bits: number): number {
  const levels = quantLevels(bits);
  const clamped = Math.max(-1, Math.min(1, w));
  const scaled = clamped * levels;
  const j = scaled >= 0 ? Math.floor(scaled + 0.5) : -Math.floor(-scaled + 0.5);
  return j / levels;
}

/** round(w_q * weightScale) as an exact integer, ties away from zero. */
export function integerize(wq: number, bits: number, weightScale: number): number {
  const levels = quantLevels(bits);
  const j = Math.round(wq * levels); // wq is j/levels exactly representable
  const num = j * weightScale;
  return num >= 0 ? Math.floor((2 * num + levels) / (2 * levels))
                  : -Math.floor((-2 * num + levels) / (2 * levels));
}

/**
 * k-bit tensor quantizer with straight-through gradients.
 *
 * tf.round uses rint semantics; exact ties are measure-zero during training
 * and the export path requantizes with the deterministic scalar rule above.
 */
export function makeSteQuantizer(bits: number) {
  const levels = quantLevels(bits);
  return tf.customGrad(
    // @ts-ignore - customGrad typings lag the (tensor, save) signature
    (w: tf.Tensor, save: (t: tf.Tensor[]) => void) => {
      save([w]);
      const value = tf.tidy(() =>
        tf.clipByValue(w, -1, 1).mul(levels).round().div(levels)
      );
      return { value, gradFunc: (dy: tf.Tensor) => [dy] };
    }
  );
}
