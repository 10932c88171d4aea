/**
 * ask/tell and minimize client for the labcat optimizer.
 *
 * The optimizer runs as a child process of its own CLI (`labcat run --cmd`),
 * which evaluates its objective by spawning a small forwarder per evaluation.
 * The forwarder relays each candidate point to a TCP bridge owned by the
 * session, so the evaluation loop inverts cleanly into ask/tell calls here:
 * `ask` resolves with the next point the optimizer wants evaluated, and
 * `tell` releases the optimizer with the value.  Point and value round-trips
 * are plain decimal text, which preserves IEEE doubles exactly.
 */
import { spawn, ChildProcess } from "child_process";
import * as fs from "fs";
import * as net from "net";
import * as os from "os";
import * as path from "path";

/** Invalid bounds or configuration (the ValueError analog). */
export class InvalidBoundsError extends Error {}

/** ask/tell called out of order, on the wrong point, or after completion. */
export class ProtocolViolationError extends Error {}

/** Raised by `ask` once the optimizer has finished its run. */
export class SessionFinishedError extends ProtocolViolationError {}

/** The client-side objective failed or returned a non-finite value. */
export class ObjectiveError extends Error {
  constructor(message: string, readonly evalIndex: number, readonly cause?: unknown) {
    super(message);
  }
}

export interface SessionConfig {
  /** Total objective evaluation budget (default 150). */
  budget?: number;
  /** RNG seed (default 0); equal seeds give identical evaluation sequences. */
  seed?: number;
  /** Trust-region half width; the optimizer defaults to 1/d clamped to [0.1, 1]. */
  beta?: number;
  /** Observation cache size factor (recommended 5..10, default 7). */
  rho?: number;
  /** Log length-scale prior standard deviation (default 0.1). */
  sigmaPrior?: number;
  /** Length-scale update steps per iteration (default 1). */
  hyperSteps?: number;
  /** Disable the principal-component rotation. */
  noRotation?: boolean;
  /** Drop the length-scale prior. */
  uniformPrior?: boolean;
  /** Seconds the optimizer waits for each tell before giving up (default 600). */
  evalTimeout?: number;
  /** Python interpreter used to launch the optimizer CLI (default "python3"). */
  pythonBin?: string;
}

export interface TraceRow {
  evalIndex: number;
  x: number[];
  y: number;
  bestY: number;
}

export interface MinimizeResult {
  bestX: number[];
  bestY: number;
  nEvals: number;
  termination: string;
  trace: TraceRow[];
}

type SessionState = "awaiting_ask" | "awaiting_tell" | "finished";

interface PendingEvaluation {
  x: number[];
  socket: net.Socket;
}

const RECOMMENDED_RHO = { min: 5, max: 10 };

function formatNumber(value: number): string {
  // Shortest round-trip decimal; Python's float() parses it bit-exactly.
  return Object.is(value, -0) ? "-0" : String(value);
}

/** One optimization run driven externally through ask/tell. */
export class SessionHandle {
  readonly dimension: number;
  readonly warnings: string[] = [];

  private state: SessionState = "awaiting_ask";
  private readonly server: net.Server;
  private child: ChildProcess | null = null;
  private port = 0;
  private pendingQueue: PendingEvaluation[] = [];
  private pendingWaiter: ((ev: PendingEvaluation | null) => void) | null = null;
  private current: PendingEvaluation | null = null;
  private connectionBuffers = new Map<net.Socket, string>();
  private liveSockets = new Set<net.Socket>();
  private exited = false;
  private exitCode: number | null = null;
  private stdout = "";
  private stderr = "";
  private exitWaiters: (() => void)[] = [];
  private nEvalsInternal = 0;
  private bestXInternal: number[] | null = null;
  private bestYInternal = Infinity;
  private readonly tracePath: string;
  private readonly workDir: string;

  constructor(readonly bounds: [number, number][], readonly config: SessionConfig) {
    if (!Array.isArray(bounds) || bounds.length === 0) {
      throw new InvalidBoundsError("bounds must be a non-empty list of (lo, hi) pairs");
    }
    for (const pair of bounds) {
      if (!Array.isArray(pair) || pair.length !== 2) {
        throw new InvalidBoundsError("each bound must be a (lo, hi) pair");
      }
      const [lo, hi] = pair;
      if (!Number.isFinite(lo) || !Number.isFinite(hi) || !(lo < hi)) {
        throw new InvalidBoundsError(`invalid bound pair (${lo}, ${hi}): need finite lo < hi`);
      }
    }
    this.dimension = bounds.length;
    validateConfig(config, this.warnings);

    this.workDir = fs.mkdtempSync(path.join(os.tmpdir(), "labcat-client-"));
    this.tracePath = path.join(this.workDir, "trace.csv");
    this.server = net.createServer((socket) => this.onConnection(socket));
  }

  /** Bind the bridge and launch the optimizer; resolves once both are up. */
  async start(): Promise<void> {
    await new Promise<void>((resolve, reject) => {
      this.server.once("error", reject);
      this.server.listen(0, "127.0.0.1", () => resolve());
    });
    const address = this.server.address();
    if (address === null || typeof address === "string") {
      throw new Error("bridge server failed to report a port");
    }
    this.port = address.port;

    const forwarder = path.join(__dirname, "forwarder.js");
    const args = [
      "-m",
      "labcat",
      "run",
      "--cmd",
      `${process.execPath} ${forwarder} ${this.port}`,
      "--dim",
      String(this.dimension),
      `--bounds=${this.bounds.map(([lo, hi]) => `${formatNumber(lo)}:${formatNumber(hi)}`).join(",")}`,
      "--budget",
      String(this.config.budget ?? 150),
      "--seed",
      String(this.config.seed ?? 0),
      "--eval-timeout",
      String(this.config.evalTimeout ?? 600),
      "--out",
      this.tracePath,
      "--no-plot",
    ];
    if (this.config.beta !== undefined) args.push("--beta", formatNumber(this.config.beta));
    if (this.config.rho !== undefined) args.push("--rho", String(this.config.rho));
    if (this.config.sigmaPrior !== undefined) {
      args.push("--sigma-prior", formatNumber(this.config.sigmaPrior));
    }
    if (this.config.hyperSteps !== undefined) {
      args.push("--hyper-steps", String(this.config.hyperSteps));
    }
    if (this.config.noRotation) args.push("--no-rotation");
    if (this.config.uniformPrior) args.push("--uniform-prior");

    const pythonBin = this.config.pythonBin ?? "python3";
    const env = { ...process.env };
    // Allow in-tree use without an installed package.
    const srcDir = path.resolve(__dirname, "..", "..", "..", "src");
    if (fs.existsSync(path.join(srcDir, "labcat"))) {
      env.PYTHONPATH = env.PYTHONPATH ? `${srcDir}:${env.PYTHONPATH}` : srcDir;
    }
    this.child = spawn(pythonBin, args, { env, stdio: ["ignore", "pipe", "pipe"] });
    this.child.stdout!.setEncoding("utf8");
    this.child.stdout!.on("data", (chunk: string) => {
      this.stdout += chunk;
    });
    this.child.stderr!.setEncoding("utf8");
    this.child.stderr!.on("data", (chunk: string) => {
      this.stderr += chunk;
    });
    this.child.on("exit", (code) => {
      this.exited = true;
      this.exitCode = code;
      if (this.pendingWaiter !== null) {
        const waiter = this.pendingWaiter;
        this.pendingWaiter = null;
        waiter(null);
      }
      for (const waiter of this.exitWaiters.splice(0)) waiter();
    });
  }

  get finished(): boolean {
    return this.state === "finished";
  }

  get evaluations(): number {
    return this.nEvalsInternal;
  }

  private onConnection(socket: net.Socket): void {
    socket.setEncoding("utf8");
    this.connectionBuffers.set(socket, "");
    this.liveSockets.add(socket);
    socket.on("close", () => {
      this.liveSockets.delete(socket);
    });
    socket.on("data", (chunk: string) => {
      const buffered = (this.connectionBuffers.get(socket) ?? "") + chunk;
      const newline = buffered.indexOf("\n");
      if (newline < 0) {
        this.connectionBuffers.set(socket, buffered);
        return;
      }
      this.connectionBuffers.delete(socket);
      const x = buffered
        .slice(0, newline)
        .trim()
        .split(/\s+/)
        .map(Number);
      const evaluation = { x, socket };
      if (this.pendingWaiter !== null) {
        const waiter = this.pendingWaiter;
        this.pendingWaiter = null;
        waiter(evaluation);
      } else {
        this.pendingQueue.push(evaluation);
      }
    });
    socket.on("error", () => {
      this.connectionBuffers.delete(socket);
    });
  }

  /** Next evaluation request, or null once the optimizer has exited. */
  private nextEvaluation(): Promise<PendingEvaluation | null> {
    if (this.pendingQueue.length > 0) {
      return Promise.resolve(this.pendingQueue.shift()!);
    }
    if (this.exited) {
      return Promise.resolve(null);
    }
    return new Promise((resolve) => {
      this.pendingWaiter = resolve;
    });
  }

  /** Internal ask: null signals a finished run instead of throwing. */
  async nextAsk(): Promise<number[] | null> {
    if (this.state === "finished") return null;
    if (this.state !== "awaiting_ask") {
      throw new ProtocolViolationError("ask called while a tell is pending");
    }
    const evaluation = await this.nextEvaluation();
    if (evaluation === null) {
      this.state = "finished";
      this.server.close();
      if (this.exitCode !== 0 && this.nEvalsInternal === 0) {
        throw new ProtocolViolationError(
          `optimizer exited with code ${this.exitCode}: ${this.stderr.trim()}`
        );
      }
      return null;
    }
    this.current = evaluation;
    this.state = "awaiting_tell";
    return evaluation.x.slice();
  }

  async waitExit(): Promise<void> {
    if (this.exited) return;
    await new Promise<void>((resolve) => this.exitWaiters.push(resolve));
  }

  /** Stop the optimizer and release the bridge (for abandoned sessions). */
  close(): void {
    if (this.child !== null && !this.exited) {
      this.child.kill("SIGKILL");
    }
    // Accepted bridge sockets (and ones the optimizer's forwarders may still
    // open while dying) would otherwise keep the event loop alive.
    for (const socket of this.liveSockets) {
      socket.destroy();
    }
    this.liveSockets.clear();
    this.server.close();
    this.server.unref();
    this.state = "finished";
  }

  recordTell(x: number[], y: number): void {
    this.nEvalsInternal += 1;
    if (y < this.bestYInternal) {
      this.bestYInternal = y;
      this.bestXInternal = x.slice();
    }
  }

  get currentEvaluation(): PendingEvaluation | null {
    return this.current;
  }

  set sessionState(next: SessionState) {
    this.state = next;
  }

  get sessionState(): SessionState {
    return this.state;
  }

  get bestSoFar(): { x: number[]; y: number } | null {
    return this.bestXInternal === null ? null : { x: this.bestXInternal.slice(), y: this.bestYInternal };
  }

  readTrace(): TraceRow[] {
    if (!fs.existsSync(this.tracePath)) return [];
    const lines = fs.readFileSync(this.tracePath, "utf8").split("\n").filter((ln) => ln.length > 0);
    const rows: TraceRow[] = [];
    for (const line of lines.slice(1)) {
      const fields = line.split(",");
      rows.push({
        evalIndex: Number(fields[1]),
        x: fields.slice(2, 2 + this.dimension).map(Number),
        y: Number(fields[2 + this.dimension]),
        bestY: Number(fields[3 + this.dimension]),
      });
    }
    return rows;
  }

  terminationFromStdout(): string {
    const match = this.stdout.match(/termination:\s*(\S+)/);
    return match === null ? "unknown" : match[1];
  }

  cleanup(): void {
    fs.rmSync(this.workDir, { recursive: true, force: true });
  }
}

function validateConfig(config: SessionConfig, warnings: string[]): void {
  if (config.budget !== undefined && (!Number.isInteger(config.budget) || config.budget < 1)) {
    throw new InvalidBoundsError("budget must be a positive integer");
  }
  if (config.rho !== undefined) {
    if (!Number.isInteger(config.rho) || config.rho < 1) {
      throw new InvalidBoundsError("rho must be a positive integer");
    }
    if (config.rho < RECOMMENDED_RHO.min || config.rho > RECOMMENDED_RHO.max) {
      warnings.push(
        `rho=${config.rho} is outside the recommended interval ` +
          `[${RECOMMENDED_RHO.min}, ${RECOMMENDED_RHO.max}]`
      );
    }
  }
  if (config.beta !== undefined && !(config.beta > 0)) {
    throw new InvalidBoundsError("beta must be positive");
  }
  if (config.sigmaPrior !== undefined && !(config.sigmaPrior > 0)) {
    throw new InvalidBoundsError("sigmaPrior must be positive");
  }
  if (config.hyperSteps !== undefined && (!Number.isInteger(config.hyperSteps) || config.hyperSteps < 1)) {
    throw new InvalidBoundsError("hyperSteps must be a positive integer");
  }
}

/** Open an ask/tell session over the optimizer; resolves once it is running. */
export async function create(
  bounds: [number, number][],
  config: SessionConfig = {}
): Promise<SessionHandle> {
  const handle = new SessionHandle(bounds, config);
  await handle.start();
  return handle;
}

/**
 * Next point the optimizer wants evaluated (objective space).
 *
 * Throws {@link SessionFinishedError} once the run is over and
 * {@link ProtocolViolationError} when a tell is already pending.
 */
export async function ask(handle: SessionHandle): Promise<number[]> {
  const x = await handle.nextAsk();
  if (x === null) {
    throw new SessionFinishedError("session finished; no further points to evaluate");
  }
  return x;
}

/** Hand the objective value for the most recent ask back to the optimizer. */
export function tell(handle: SessionHandle, x: number[], y: number): void {
  if (handle.sessionState === "finished") {
    throw new ProtocolViolationError("session already finished");
  }
  if (handle.sessionState !== "awaiting_tell" || handle.currentEvaluation === null) {
    throw new ProtocolViolationError("tell without a pending ask");
  }
  const pending = handle.currentEvaluation;
  if (x.length !== pending.x.length || x.some((v, i) => v !== pending.x[i])) {
    throw new ProtocolViolationError("tell must echo the most recent ask's point");
  }
  if (!Number.isFinite(y)) {
    throw new ObjectiveError(`objective value must be finite, got ${y}`, handle.evaluations);
  }
  pending.socket.write(formatNumber(y) + "\n");
  pending.socket.end();
  handle.recordTell(x, y);
  handle.sessionState = "awaiting_ask";
}

/** Best observed point and value so far; errors before the first tell. */
export function best(handle: SessionHandle): { x: number[]; y: number } {
  const current = handle.bestSoFar;
  if (current === null) {
    throw new ProtocolViolationError("no evaluations recorded yet");
  }
  return current;
}

/** Final result; waits for the optimizer process to finish. */
export async function result(handle: SessionHandle): Promise<MinimizeResult> {
  await handle.waitExit();
  handle.close();
  const trace = handle.readTrace();
  const summary = best(handle);
  const outcome = {
    bestX: summary.x,
    bestY: summary.y,
    nEvals: handle.evaluations,
    termination: handle.terminationFromStdout(),
    trace,
  };
  handle.cleanup();
  return outcome;
}

/**
 * Drive a full run against a local objective function.
 *
 * The function may be synchronous or async; any exception it raises aborts
 * the run and is rethrown as an {@link ObjectiveError} carrying the
 * evaluation index.
 */
export async function minimize(
  func: (x: number[]) => number | Promise<number>,
  bounds: [number, number][],
  config: SessionConfig = {}
): Promise<MinimizeResult> {
  const handle = await create(bounds, config);
  try {
    for (;;) {
      const x = await handle.nextAsk();
      if (x === null) break;
      let y: number;
      try {
        y = await func(x);
      } catch (err) {
        throw new ObjectiveError(
          `objective raised at evaluation ${handle.evaluations}: ${err}`,
          handle.evaluations,
          err
        );
      }
      tell(handle, x, y);
    }
    return await result(handle);
  } finally {
    handle.close();
  }
}
