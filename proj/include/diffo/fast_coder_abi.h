/* C boundary of an external range coder that is byte-compatible with the
 * reference coder in entropy.hpp. A shared library exporting these two
 * symbols can be selected with DIFFO_FAST_CODER_LIB. */
#ifndef DIFFO_FAST_CODER_ABI_H
#define DIFFO_FAST_CODER_ABI_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

enum {
  DFO_OK = 0,
  DFO_INVALID_PMF = 1,
  DFO_CORRUPT = 2,
  DFO_BAD_REQUEST = 3,
  DFO_BUFFER_TOO_SMALL = 4
};

/* Encodes n symbols; writes at most out_capacity bytes and stores the
 * payload length in *out_len. */
typedef int32_t (*dfo_fast_encode_fn)(const uint16_t* freq, uint32_t k, const uint16_t* symbols, uint64_t n,
                                      uint8_t* out, uint64_t out_capacity, uint64_t* out_len);

/* Decodes exactly n symbols from payload. */
typedef int32_t (*dfo_fast_decode_fn)(const uint16_t* freq, uint32_t k, const uint8_t* payload,
                                      uint64_t payload_len, uint16_t* symbols, uint64_t n);

int32_t dfo_fast_encode(const uint16_t* freq, uint32_t k, const uint16_t* symbols, uint64_t n, uint8_t* out,
                        uint64_t out_capacity, uint64_t* out_len);
int32_t dfo_fast_decode(const uint16_t* freq, uint32_t k, const uint8_t* payload, uint64_t payload_len,
                        uint16_t* symbols, uint64_t n);

#ifdef __cplusplus
}
#endif

#endif
