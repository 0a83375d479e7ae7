// Full walkthrough driven entirely through the UI panes against a real
// wallet service spawned for the test: register on the web pane, recharge
// and send over the phone pane, forward incoming money from a second phone,
// spend at the POS pane, withdraw at the ATM pane. Every USSD screen must
// match the golden transcripts byte for byte.

import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { Cast, GatewayClient } from "../src/api";
import { AtmPane } from "../src/atm";
import { PhonePane } from "../src/phone";
import { PosPane } from "../src/pos";
import { WebBankPane } from "../src/webbank";
import GOLDEN from "./golden_screens.json";

const SENDER = "27820000001";
const WIFE = "27820000002";
const PARENT = "27820000003";
const SELLER = "27820000004";

let service: ChildProcess;
let base: string;
let client: GatewayClient;
let cast: Cast;

async function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = createServer();
    probe.once("error", reject);
    probe.listen(0, "127.0.0.1", () => {
      const port = (probe.address() as { port: number }).port;
      probe.close(() => resolve(port));
    });
  });
}

beforeAll(async () => {
  const port = await freePort();
  base = `http://127.0.0.1:${port}`;
  const journal = join(mkdtempSync(join(tmpdir(), "ewallet-ui-")), "journal.ndjson");
  service = spawn(
    "python3",
    ["-m", "ewallet.cli", "serve", "--listen", `127.0.0.1:${port}`, "--journal", journal, "--seed-default"],
    { stdio: "ignore" },
  );
  for (let attempt = 0; attempt < 100; attempt += 1) {
    try {
      const response = await fetch(`${base}/health`);
      if (response.ok) break;
    } catch {
      await new Promise((resolve) => setTimeout(resolve, 150));
    }
    if (attempt === 99) throw new Error("wallet service did not come up");
  }
  client = new GatewayClient(base);
  cast = await client.cast();
}, 30_000);

afterAll(() => {
  service?.kill();
});

function mountPhone(msisdn: string, label: string): PhonePane {
  const root = document.createElement("div");
  document.body.appendChild(root);
  return new PhonePane(root, client, cast, msisdn, label);
}

function paneInput(pane: PhonePane): HTMLInputElement {
  return (pane as unknown as { inputEl: HTMLInputElement }).inputEl;
}

async function press(pane: PhonePane, text: string): Promise<string> {
  paneInput(pane).value = text;
  await pane.submitInput();
  return pane.screenText;
}

function codeFromInbox(pane: PhonePane): string {
  for (const message of [...pane.inbox].reverse()) {
    const match = /access code is (\d{8})/.exec(message.body);
    if (match) return match[1];
  }
  throw new Error(`no access code SMS on ${pane.msisdn}`);
}

describe("scenario through the panes", () => {
  it("registers, sends, forwards, sells and dispenses with golden screens", async () => {
    // -- register the banked sender and the seller on the web pane ---------
    const webRoot = document.createElement("div");
    document.body.appendChild(webRoot);
    const web = new WebBankPane(webRoot, client, cast);
    const fields = (selector: string) =>
      webRoot.querySelector<HTMLInputElement>(selector)!;
    const inputs = Array.from(webRoot.querySelectorAll("input"));
    const [regMsisdn, regName, regPin, regQuestion, regAnswer, regBank] = inputs;

    regMsisdn.value = SENDER;
    regName.value = "Kayembe Ka Tshitupa";
    regPin.value = "1234";
    regQuestion.value = "Home town?";
    regAnswer.value = "Kananga";
    regBank.value = "62000000001";
    await web.register();
    expect(webRoot.querySelector(".status")!.textContent).toContain(`registered ${SENDER}`);

    regMsisdn.value = SELLER;
    regName.value = "Corner Store";
    regPin.value = "9876";
    regQuestion.value = "First stock item?";
    regAnswer.value = "maize";
    regBank.value = "";
    await web.register();
    expect(webRoot.querySelector(".status")!.textContent).toContain(`registered ${SELLER}`);
    expect(fields(".status")).toBeTruthy();

    // the cast now includes the two subscribers; panes built below need it
    cast = await client.cast();

    // -- sender recharges R1000 from the bank over USSD --------------------
    const senderPhone = mountPhone(SENDER, "Phone 1");
    await senderPhone.dial();
    expect(senderPhone.screenText).toBe(GOLDEN.pin_prompt);
    expect(await press(senderPhone, "1234")).toBe(GOLDEN.root);
    expect(await press(senderPhone, "1")).toBe(GOLDEN.transfer_target);
    expect(await press(senderPhone, "1")).toBe("Enter amount");
    expect(await press(senderPhone, "1000")).toBe(
      "Recharge R1000 from your bank account?\n1. Confirm\n2. Cancel",
    );
    expect(await press(senderPhone, "1")).toBe(GOLDEN.success);

    // -- sender sends R550 to the wife, choosing the eWallet source --------
    await senderPhone.dial();
    await press(senderPhone, "1234");
    await press(senderPhone, "1");
    await press(senderPhone, "2");
    expect(await press(senderPhone, WIFE)).toBe("Enter amount");
    expect(await press(senderPhone, "550")).toBe(GOLDEN.source_select);
    await press(senderPhone, "2");
    expect(await press(senderPhone, "1")).toBe(GOLDEN.success);

    // -- the wife's phone shows the incoming screen and forwards R250 ------
    const wifePhone = mountPhone(WIFE, "Phone 2");
    await wifePhone.pollInbox();
    const wifeCode = codeFromInbox(wifePhone);
    await wifePhone.dial();
    expect(wifePhone.screenText).toBe(GOLDEN.incoming_unregistered);
    expect(await press(wifePhone, "1")).toBe(GOLDEN.receiver_menu_unregistered);
    await press(wifePhone, "3");
    await press(wifePhone, PARENT);
    await press(wifePhone, "250");
    expect(await press(wifePhone, "1")).toBe(GOLDEN.success);

    // -- she buys R300 of goods; the seller keys her code at the POS -------
    const posRoot = document.createElement("div");
    document.body.appendChild(posRoot);
    const pos = new PosPane(posRoot, client, cast);
    posRoot.querySelector("select")!.value = SELLER;
    const [posBuyer, posAmount, posCode] = Array.from(posRoot.querySelectorAll("input"));
    posBuyer.value = WIFE;
    posAmount.value = "300";
    posCode.value = wifeCode;
    await pos.charge();
    const posReceipt = posRoot.querySelector(".receipt")!.textContent!;
    expect(posReceipt).toContain("Charged R300 (ACCESS_CODE)");
    expect(posReceipt).toContain("State: NOTIFIED");

    // the seller's phone received the credit SMS
    const sellerPhone = mountPhone(SELLER, "Phone 4");
    await sellerPhone.pollInbox();
    expect(sellerPhone.inbox.some((m) => m.body.includes("You received R300"))).toBe(true);

    // -- a parent withdraws the forwarded R250 at the ATM ------------------
    const parentPhone = mountPhone(PARENT, "Phone 3");
    await parentPhone.pollInbox();
    const parentCode = codeFromInbox(parentPhone);
    const atmRoot = document.createElement("div");
    document.body.appendChild(atmRoot);
    const atm = new AtmPane(atmRoot, client);
    const [atmMsisdn, atmCode, atmAmount] = Array.from(atmRoot.querySelectorAll("input"));
    atmMsisdn.value = PARENT;
    atmCode.value = parentCode;
    atmAmount.value = "250";
    await atm.redeem();
    const atmReceipt = atmRoot.querySelector(".receipt")!.textContent!;
    expect(atmReceipt).toContain("Dispensed R250");
    expect(atmReceipt).toContain("Remaining R0");
    expect(atmReceipt).toContain("Code state: REDEEMED");

    // -- a double redemption at the ATM is rejected with the engine code ---
    atmCode.value = parentCode;
    atmAmount.value = "1";
    await atm.redeem();
    expect(atmRoot.querySelector(".banner")!.textContent).toContain("CODE_ALREADY_REDEEMED");

    // -- wrong code at the POS is rejected ---------------------------------
    posBuyer.value = WIFE;
    posAmount.value = "10";
    posCode.value = "00000000";
    await pos.charge();
    expect(posRoot.querySelector(".banner")!.textContent).toContain("CODE_UNKNOWN");

    // -- the sender's web balance is the gateway-rendered figure -----------
    const [, , , , , , loginMsisdn, loginPassword, newPassword] = Array.from(
      webRoot.querySelectorAll("input"),
    );
    await senderPhone.pollInbox();
    const tempPassword = senderPhone.inbox
      .map((m) => /temporary password is (\w{10})/.exec(m.body))
      .find(Boolean)![1];
    loginMsisdn.value = SENDER;
    loginPassword.value = tempPassword;
    await web.login();
    newPassword.value = "longenough1";
    await web.changePassword();
    await web.checkBalance();
    expect(webRoot.querySelector(".balance")!.textContent).toBe("Balance: R450");
  }, 60_000);
});
