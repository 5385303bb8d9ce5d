#!/usr/bin/env python3
"""Recompute aggregate fabric bandwidth from its factors and compare with the quoted figures."""

import json

from gcnfabric.netsim import published_bandwidth_audit

audit = published_bandwidth_audit()
print(audit["formula"])
print(f"effective: {audit['effective_bandwidth'] / 1e12:.3f} TB/s computed, "
      f"{audit['published_effective_bandwidth'] / 1e12:.2f} TB/s quoted "
      f"(ratio {audit['effective_ratio_to_published']:.4f})")
print(f"raw:       {audit['raw_bandwidth'] / 1e9:.1f} GB/s computed, "
      f"{audit['published_raw_bandwidth'] / 1e9:.1f} GB/s quoted "
      f"(ratio {audit['raw_ratio_to_published']:.4f})")
print(json.dumps(audit["report"], indent=2))
