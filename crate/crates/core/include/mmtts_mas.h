/* Batched monotonic alignment kernel ABI.
 *
 * A kernel library exports `mas_batch_f32`. Set MMTTS_MAS_KERNEL to its
 * path, or install it as libmmtts_mas_kernel.so on the library path.
 * Results must equal the in-process reference bit for bit: f32 scores
 * accumulated left to right over frames, ties stay on the current phoneme.
 */
#ifndef MMTTS_MAS_H
#define MMTTS_MAS_H

#include <stddef.h>
#include <stdint.h>

#define MMTTS_MAS_OK 0
#define MMTTS_MAS_LAYOUT (-1)
#define MMTTS_MAS_NON_FINITE (-2)

/* data:    batch * p_max * f_max floats, index (b * p_max + p) * f_max + f
 * valid_p: per-item phoneme counts, 1 <= valid_p[b] <= p_max
 * valid_f: per-item frame counts, valid_f[b] <= f_max
 * out:     batch * f_max; phoneme index per valid frame, -1 beyond
 * returns: MMTTS_MAS_OK, a negative status, or b + 1 if item b has
 *          fewer frames than phonemes. */
int32_t mas_batch_f32(const float *data, size_t batch, size_t p_max, size_t f_max,
                      const int32_t *valid_p, const int32_t *valid_f, int32_t *out);

#endif
