#!/usr/bin/env python3
"""Two-party CryptoNets-ReLU session over TCP on localhost.

The server thread holds the model; the client holds the secret key, encrypts
a batch of synthetic digits and answers each ReLU request.  Prints the
predictions, per-layer latency and how many bytes the interactive rounds cost.
"""

import threading

import numpy as np

from heinfer.ckks import keygen, preset
from heinfer.graph import cryptonets_relu, forward, synthetic_digits
from heinfer.protocol import InferenceClient, InferenceServer

params = preset("P11")
sk, rk = keygen(params, seed=5)
model = cryptonets_relu(seed=0)

server = InferenceServer(model, params)
host, port = server.bind("127.0.0.1", 0)
worker = threading.Thread(target=server.serve_forever, kwargs={"max_sessions": 1})
worker.start()

batch, labels = synthetic_digits(16, seed=6)
client = InferenceClient.connect(host, port, params, sk, rk, seed=7)
ack = client.handshake(model.name, "complex", len(batch))
print(f"connected to {host}:{port}: {ack['model']} on {ack['preset']}, {ack['nonlinear_layers']} ReLU layers")

logits = client.infer(batch)
client.close()
worker.join()

report = client.report()
clear = forward(model, batch)
print(f"max |encrypted - cleartext| = {np.abs(logits - clear).max():.2e}")
print(f"argmax agrees on {(logits.argmax(1) == clear.argmax(1)).sum()}/{len(batch)} samples")
print(f"sent {report.bytes_sent / 1e6:.1f} MB, received {report.bytes_received / 1e6:.1f} MB")
print(f"interactive: {report.interactive_bytes / 1e6:.1f} MB per session")
# traffic is per session, so a full complex batch amortizes it
print(f"  {report.interactive_mb_per_image:.3f} MB/image at batch {len(batch)}, "
      f"{report.interactive_bytes / 1e6 / params.poly_degree:.4f} MB/image at batch {params.poly_degree}")
for layer, lat in report.layer_latency.items():
    print(f"  {layer:<7} " + "  ".join(f"{k} {v:.2f} s" for k, v in lat.items()))
