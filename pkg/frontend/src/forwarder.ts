/**
 * Per-evaluation bridge process.
 *
 * The optimizer CLI spawns this script once per objective evaluation with the
 * candidate point on stdin (whitespace-separated decimals).  The point is
 * relayed to the session's local TCP bridge, and the single-line reply (the
 * objective value produced by the client's `tell`) is printed to stdout.
 */
import * as net from "net";

function main(): void {
  const port = Number(process.argv[2]);
  if (!Number.isInteger(port) || port <= 0) {
    process.stderr.write("forwarder: missing bridge port argument\n");
    process.exit(1);
  }

  let input = "";
  process.stdin.setEncoding("utf8");
  process.stdin.on("data", (chunk: string) => {
    input += chunk;
  });
  process.stdin.on("end", () => {
    const socket = net.connect({ host: "127.0.0.1", port }, () => {
      socket.write(input.trim() + "\n");
    });
    socket.setEncoding("utf8");
    let reply = "";
    socket.on("data", (chunk: string) => {
      reply += chunk;
      const newline = reply.indexOf("\n");
      if (newline >= 0) {
        process.stdout.write(reply.slice(0, newline) + "\n");
        socket.end();
        process.exit(0);
      }
    });
    socket.on("error", (err: Error) => {
      process.stderr.write(`forwarder: bridge connection failed: ${err.message}\n`);
      process.exit(1);
    });
  });
}

main();
