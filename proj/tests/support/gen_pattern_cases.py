# Reference evaluator for the published pattern excerpt (Python re). Run from fixtures/ to regenerate pattern_cases.tsv.
import re, sys
rows=[l.rstrip('\n').split('\t') for l in open('published_patterns.tsv') if l.strip() and not l.startswith('#')]
def accepts(expr, api, name):
    n=name.lower().rstrip('.')
    if api=='flexible':
        e=expr[:-2] if expr.endswith('/A') else expr
        e=e.replace('[[:alnum:]]','[A-Za-z0-9]')
        return re.search(e, n+'.') is not None
    if api=='basic':
        g=expr[len('rrset/name/'):-2].rstrip('.')
    else:
        g=expr
    if g.startswith('*.'):
        rest=g[1:]
        return n.endswith(rest) and len(n)>len(rest) and not n[:-len(rest)].endswith('.') and n[:-len(rest)] != ''
    return n==g
def prov_accepts(p,name):
    return any(accepts(r[3],r[2],name) for r in rows if r[0]==p)
pos={
 'huawei':['abc123.iot-mqtts.cn-north-4.myhuaweicloud.com','dev.iot-coaps.cn-north-4.myhuaweicloud.com','x1.iot-https.cn-east-3.myhuaweicloud.com','a.b.iot-amqps.cn-south-1.myhuaweicloud.com','9f3e.iot-api.cn-north-4.myhuaweicloud.com','q.iot-da.cn-east-3.myhuaweicloud.com'],
 'amazon':['abcd1234.iot.eu-west-1.amazonaws.com','a3k7odshaiipe8-ats.iot.us-east-1.amazonaws.com','x.iot.us-east-2.amazonaws.com','data.iot.ap-southeast-2.amazonaws.com','c1.iot.eu-central-1.amazonaws.com','foo.bar.iot.us-west-2.amazonaws.com'],
 'oracle':['iot.oraclecloud.com','tenant1.iot.us-phoenix-1.oraclecloud.com','x.iot.oraclecloud.com','a.b.iot.eu-frankfurt-1.oraclecloud.com','iot.uk-london-1.oraclecloud.com'],
 'baidu':['abc.iot.gz.baidubce.com','xyz.iot.bj.baidubce.com','dev1.iot.baidubce.com','a-b.iot.gz.baidubce.com'],
 'siemens':['x.eu1.mindsphere.io','tenant.eu1.mindsphere.io','a.b.eu1.mindsphere.io','gateway.eu1.mindsphere.io'],
 'sierra':['na.airvantage.net','eu-gw.na.airvantage.net','x.na.airvantage.net','a.b.na.airvantage.net'],
 'bosch':['bosch-iot-hub.com','mqtt.bosch-iot-hub.com','http.bosch-iot-hub.com','amqp.eu.bosch-iot-hub.com'],
 'ibm':['internetofthings.ibmcloud.com','org1.messaging.internetofthings.ibmcloud.com','x.internetofthings.ibmcloud.com','abc.internetofthings.ibmcloud.com'],
 'microsoft':['azure-devices.net','myhub.azure-devices.net','contoso-hub.azure-devices.net','a.b.azure-devices.net'],
 'tencent':['abc.iotcloud.tencentdevices.com','x.tencentdevices.com','tencentdevices.com','p1.ap-guangzhou.iothub.tencentdevices.com'],
 'google':['mqtt.googleapis.com','MQTT.GOOGLEAPIS.COM.','mqtt.googleapis.com.'],
 'cisco':['x.ciscokinetic.io','us.ciscokinetic.io','eu.gw.ciscokinetic.io','a1.ciscokinetic.io'],
 'alibaba':['pk1.iot-amqp.cn-shanghai.aliyuncs.com','a1b2c3.iot-as-http.cn-shanghai.aliyuncs.com','x.y.iot-amqp.cn-shanghai.aliyuncs.com'],
 'sap':['x.iot.sap','tenant.eu10.cp.iot.sap','a.iot.sap','gw1.us10.cp.iot.sap'],
}
def variants(p, names):
    out=[]
    base=names[0].lower().rstrip('.')
    parts=base.split('.')
    parent_map={'huawei':'myhuaweicloud.com','amazon':'amazonaws.com','oracle':'oraclecloud.com','baidu':'baidubce.com','siemens':'mindsphere.io','sierra':'airvantage.net','bosch':'bosch-iot-hub.com','ibm':'internetofthings.ibmcloud.com','microsoft':'azure-devices.net','tencent':'tencentdevices.com','google':'googleapis.com','cisco':'ciscokinetic.io','alibaba':'aliyuncs.com','sap':'iot.sap'}
    par=parent_map[p]
    head=base[:-len(par)]
    tlds=['org','net','com','io','de','co','sap.com']
    for n in names[:3]:
        n=n.lower().rstrip('.')
        h=n[:-len(par)]
        out.append(n+'.evil.example')
        out.append(n+'x')
        out.append(h[:-1]+'-'+par if h else 'x-'+par)
        out.append(h+'x'+par)
        pl=par.split('.')
        for t in tlds:
            if pl[-1]!=t: out.append(h+'.'.join(pl[:-1]+[t]))
        out.append(h+par[1:])
        out.append(h+par[:-1])
        out.append(h+par.replace('.', '-',1))
        out.append(h+'my'+par)
    out.append('www.example.com')
    out.append('www.'+par.split('.')[-2]+'.org')
    return out
extra={
 'huawei':['abc.iot-mqtt.cn-north-4.myhuaweicloud.com','abc.iot-xyz.cn-north-4.myhuaweicloud.com','iot-mqtts.cn-north-4.myhuaweicloud.com','abc.mqtts.cn-north-4.myhuaweicloud.com','abc.iot-mqtts.myhuaweicloud.com','obs.cn-north-4.myhuaweicloud.com','console.myhuaweicloud.com','myhuaweicloud.com'],
 'amazon':['www.amazonaws.com','amazonaws.com','s3.eu-west-1.amazonaws.com','x.iot2.us-east-1.amazonaws.com','x.lot.us-east-1.amazonaws.com','iot.us-east-1.amazonaws.com','x.iot.amazonaws.com','ec2.us-east-1.amazonaws.com','x.iotx.us-east-1.amazonaws.com'],
 'oracle':['oraclecloud.com','x.oraclecloud.com','x.iot2.oraclecloud.com','xiot.oraclecloud.com','objectstorage.us-phoenix-1.oraclecloud.com','iot.a.b.oraclecloud.com'],
 'baidu':['baidubce.com','iot.gz.baidubce.com','x.bos.gz.baidubce.com','x.iot2.gz.baidubce.com','x.iot.a.b.baidubce.com'],
 'siemens':['eu1.mindsphere.io','x.eu2x.mindsphere.io','x.eu11.mindsphere.io','x.meu1.mindsphere.io','mindsphere.io','x.mindsphere.io','www.mindsphere.io'],
 'sierra':['airvantage.net','x.airvantage.net','x.nax.airvantage.net','xna.airvantage.net','x.us.airvantage.net'],
 'bosch':['bosch-iot.com','x.bosch-iot-suite.com','x.bosch.com','iot-hub.com','x.bosch-iot-hubs.com'],
 'ibm':['ibmcloud.com','x.ibmcloud.com','internetofthing.ibmcloud.com','x.internetofthings.ibm.com','x.iot.ibmcloud.com'],
 'microsoft':['azure.net','x.azure-device.net','x.azure-devices.com','x.devices.net','x.azure.net','azure-devices.net.cn'],
 'tencent':['tencent.com','x.tencentdevice.com','x.tencentdevices.cn','x.tencentcloud.com','xtencentdevices.com'],
 'google':['googleapis.com','mqtt2.googleapis.com','x.mqtt.googleapis.com','mqtt.googleapis.co','mqtt.google.com','www.googleapis.com','mqtts.googleapis.com','storage.googleapis.com','cloudiotdevice.googleapis.com','mqtt-googleapis.com'],
 'cisco':['ciscokinetic.io','x.ciscokinetic.com','x.cisco.io','xciscokinetic.io','x.ciscokinetics.io'],
 'alibaba':['aliyuncs.com','x.iot-amqp.aliyuncs.com','x.oss-cn-shanghai.aliyuncs.com','x.iot-amqpx.cn-shanghai.aliyuncs.com','iot-amqp.cn-shanghai.aliyuncs.com','x.iot.cn-shanghai.aliyuncs.com'],
 'sap':['iot.sap','x.sap','x.iotx.sap','x.iot.sap.com','xiot.sap','sap.com'],
}
out=['# provider\texpect\tfqdn   (+ accepted by the published expression(s), - near miss rejected by them)']
bad=0
for p,names in pos.items():
    for n in names:
        if not prov_accepts(p,n): print('POS FAIL',p,n,file=sys.stderr); bad+=1
        out.append(f'{p}\t+\t{n}')
    seen=set(); cnt=0
    for n in extra[p]+variants(p,names):
        if n in seen or n in names: continue
        seen.add(n)
        if prov_accepts(p,n): continue  # not a near miss under the reference evaluator
        out.append(f'{p}\t-\t{n}'); cnt+=1
    if cnt<20: print('TOO FEW',p,cnt,file=sys.stderr); bad+=1
open('pattern_cases.tsv','w').write('\n'.join(out)+'\n')
print('bad',bad)
