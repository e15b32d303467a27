"""Why a scan: wall-time scaling against quadratic attention.

Times the blocked associative scan and a single-head attention reference
over doubling sequence lengths. The scan's time roughly doubles per step;
attention's roughly quadruples, since both its score matrix and softmax
are L x L.
"""

from panrestore.bench import bench_scan, doubling_ratio, format_bench_table

rows = bench_scan(lengths=(1024, 2048, 4096), runs=5)
print(format_bench_table(rows))
print()
print(f"scan      2048 -> 4096: x{doubling_ratio(rows, 'scan', 2048):.2f}")
print(f"attention 2048 -> 4096: x{doubling_ratio(rows, 'attention', 2048):.2f}")
