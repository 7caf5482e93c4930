/* Stream rANS entropy coder with a flat-buffer C ABI.
 *
 * Tables are views into one shared cumulative-frequency array: symbol i
 * uses cdf[offsets[i] .. offsets[i] + lens[i]], a non-decreasing sequence
 * from 0 to 65536. Streams are a little-endian u64 final state followed by
 * little-endian u32 renormalization words.
 */

#ifndef SELIC_FASTCODER_H
#define SELIC_FASTCODER_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define SELIC_RC_OK 0
#define SELIC_RC_ERR_ARGS (-1)      /* null pointer or mismatched lengths */
#define SELIC_RC_ERR_CDF (-2)       /* malformed or out-of-bounds table */
#define SELIC_RC_ERR_SYMBOL (-3)    /* symbol outside its alphabet */
#define SELIC_RC_ERR_BUFFER (-4)    /* output capacity too small */
#define SELIC_RC_ERR_TRUNCATED (-5) /* stream ended mid-decode */

/* Returns 1; bump means an incompatible layout or semantics change. */
uint32_t selic_rc_abi_version(void);

/* Encode n symbols into out (capacity cap bytes); the stream length is
 * written to *out_len. cap >= 8 + 4 * n always suffices. On any nonzero
 * return no byte of out has been written. */
int32_t selic_rc_encode(const uint32_t *symbols, size_t n,
                        const uint32_t *cdf, size_t cdf_len,
                        const uint64_t *offsets, const uint32_t *lens,
                        uint8_t *out, size_t cap, size_t *out_len);

/* Decode count symbols from data (len bytes) into out. out is never
 * written past count elements. */
int32_t selic_rc_decode(const uint8_t *data, size_t len,
                        const uint32_t *cdf, size_t cdf_len,
                        const uint64_t *offsets, const uint32_t *lens,
                        size_t count, uint32_t *out);

#ifdef __cplusplus
}
#endif

#endif /* SELIC_FASTCODER_H */
