import { defineConfig } from "vite";

// During development the UI runs on the vite dev server and proxies every
// gateway path to the python service, so the browser sees one origin.
const GATEWAY = process.env.EWALLET_GATEWAY ?? "http://127.0.0.1:8555";

const gatewayPaths = [
  "/ussd",
  "/register",
  "/login",
  "/password",
  "/pin",
  "/details",
  "/deregister",
  "/wallets",
  "/transfers",
  "/recharge",
  "/withdrawals",
  "/atm",
  "/pos",
  "/sms",
  "/admin",
  "/health",
];

const proxy = Object.fromEntries(gatewayPaths.map((path) => [path, GATEWAY]));

export default defineConfig({
  server: { port: 5180, proxy },
  preview: { port: 5180, proxy },
  test: {
    environment: "jsdom",
  },
});
