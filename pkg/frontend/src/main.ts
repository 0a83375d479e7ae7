import { GatewayClient } from "./api";
import { AtmPane } from "./atm";
import { PhonePane } from "./phone";
import { PosPane } from "./pos";
import { WebBankPane } from "./webbank";
import "./style.css";

const INBOX_POLL_MS = 2000;

async function boot(): Promise<void> {
  const app = document.getElementById("app")!;
  const client = new GatewayClient();

  let cast;
  try {
    cast = await client.cast();
  } catch (error) {
    app.innerHTML = `<div class="banner">Cannot reach the wallet service: ${String(error)}.
      Start it with: ewallet serve --seed-default</div>`;
    return;
  }

  const phoneRow = document.createElement("div");
  phoneRow.className = "row";
  const deviceRow = document.createElement("div");
  deviceRow.className = "row";
  app.append(phoneRow, deviceRow);

  const labels = ["Phone 1", "Phone 2", "Phone 3", "Phone 4"];
  const phones = labels.map((label, index) => {
    const mount = document.createElement("div");
    phoneRow.appendChild(mount);
    const msisdn = cast.msisdns[index % cast.msisdns.length]?.msisdn ?? "";
    return new PhonePane(mount, client, cast, msisdn, label);
  });

  const atmMount = document.createElement("div");
  const posMount = document.createElement("div");
  const webMount = document.createElement("div");
  deviceRow.append(atmMount, posMount, webMount);
  new AtmPane(atmMount, client);
  new PosPane(posMount, client, cast);
  new WebBankPane(webMount, client, cast);

  setInterval(() => {
    for (const phone of phones) void phone.pollInbox();
  }, INBOX_POLL_MS);
}

void boot();
